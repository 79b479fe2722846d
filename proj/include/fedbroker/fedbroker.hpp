#pragma once

#include "fedbroker/error.hpp"
#include "fedbroker/model.hpp"
#include "fedbroker/prompting.hpp"
#include "fedbroker/llm_client.hpp"
#include "fedbroker/mock_backend.hpp"
#include "fedbroker/http_backend.hpp"
#include "fedbroker/embedding.hpp"
#include "fedbroker/selector.hpp"
#include "fedbroker/slat.hpp"
#include "fedbroker/eval.hpp"
#include "fedbroker/io.hpp"
#include "fedbroker/ingest.hpp"
#include "fedbroker/config.hpp"
#include "fedbroker/service.hpp"
