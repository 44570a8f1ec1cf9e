#pragma once

#include "teamline/agent.hpp"
#include "teamline/assets.hpp"
#include "teamline/checklist.hpp"
#include "teamline/clock.hpp"
#include "teamline/coding.hpp"
#include "teamline/csv.hpp"
#include "teamline/errors.hpp"
#include "teamline/event.hpp"
#include "teamline/gateway.hpp"
#include "teamline/http_provider.hpp"
#include "teamline/provider.hpp"
#include "teamline/provider_factory.hpp"
#include "teamline/report.hpp"
#include "teamline/session.hpp"
#include "teamline/session_config.hpp"
#include "teamline/timeline.hpp"
#include "teamline/transcript.hpp"
