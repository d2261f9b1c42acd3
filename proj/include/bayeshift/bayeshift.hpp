// Copyright 2026 The bayeshift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#ifndef BAYESHIFT_BAYESHIFT_HPP_
#define BAYESHIFT_BAYESHIFT_HPP_

#include "bayeshift/baselines.hpp"
#include "bayeshift/common.hpp"
#include "bayeshift/diagnostics.hpp"
#include "bayeshift/harness.hpp"
#include "bayeshift/inference.hpp"
#include "bayeshift/info_geometry.hpp"
#include "bayeshift/io.hpp"
#include "bayeshift/label_graph.hpp"
#include "bayeshift/model.hpp"
#include "bayeshift/parallel.hpp"
#include "bayeshift/simplex.hpp"

#endif  // BAYESHIFT_BAYESHIFT_HPP_
