// Copyright 2026 The neurofuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Umbrella header.

#ifndef NEUROFUZZ_NEUROFUZZ_HPP
#define NEUROFUZZ_NEUROFUZZ_HPP

#include "neurofuzz/analysis.hpp"
#include "neurofuzz/corpus_gen.hpp"
#include "neurofuzz/coverage.hpp"
#include "neurofuzz/error.hpp"
#include "neurofuzz/experiment.hpp"
#include "neurofuzz/generator.hpp"
#include "neurofuzz/mutation.hpp"
#include "neurofuzz/neural_core.hpp"
#include "neurofuzz/random.hpp"
#include "neurofuzz/report.hpp"
#include "neurofuzz/seq_data.hpp"
#include "neurofuzz/surrogate_target.hpp"
#include "neurofuzz/training.hpp"

#endif  // NEUROFUZZ_NEUROFUZZ_HPP
