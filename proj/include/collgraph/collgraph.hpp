/*
 * Copyright 2026 The collgraph Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *  http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "collgraph/errors.hpp"
#include "collgraph/expander.hpp"
#include "collgraph/generators.hpp"
#include "collgraph/msccl.hpp"
#include "collgraph/sim_io.hpp"
#include "collgraph/simulator.hpp"
#include "collgraph/sweep.hpp"
#include "collgraph/topology.hpp"
#include "collgraph/trace.hpp"
#include "collgraph/trace_io.hpp"
#include "collgraph/validator.hpp"
#include "collgraph/xml.hpp"
