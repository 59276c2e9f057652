/* Copyright 2026 The sifuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SIFUSE_SIFUSE_HPP_
#define SIFUSE_SIFUSE_HPP_

#include "sifuse/commands.hpp"
#include "sifuse/config.hpp"
#include "sifuse/cvc.hpp"
#include "sifuse/errors.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/fdl.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/iea.hpp"
#include "sifuse/losses.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/parallel.hpp"
#include "sifuse/pipeline.hpp"
#include "sifuse/radar_branch.hpp"
#include "sifuse/robustness.hpp"
#include "sifuse/scene_io.hpp"
#include "sifuse/scene_synth.hpp"
#include "sifuse/tensor_io.hpp"
#include "sifuse/view_transform.hpp"

#endif  // SIFUSE_SIFUSE_HPP_
