/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

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

#ifndef SCREAMKD_ERROR_HPP_
#define SCREAMKD_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace screamkd {

// Error kinds surfaced by every module. Names are stable; the CLI prints
// them verbatim in structured error output.
enum class Errc {
  // audio-io
  MalformedContainer,
  UnsupportedEncoding,
  InvalidRate,
  // dsp-features
  InvalidParams,
  NonFiniteInput,
  IoError,
  BadMagic,
  VersionMismatch,
  // tensor-core
  ShapeMismatch,
  InvalidP,
  LabelOutOfRange,
  NotADistribution,
  NotScalar,
  DetachedNode,
  // model-zoo
  InvalidConfig,
  InputTooSmall,
  ChecksumMismatch,
  // kd-train
  InvalidT,
  EmptyDataset,
  TeacherNotFrozen,
  // data-pipeline
  ParseError,
  MissingFile,
  UnrecognizedEmotion,
  MalformedName,
  EmptyClass,
  TooFewRecords,
  NoiseTooShort,
  RateMismatch,
  MissingCategory,
  // eval-bench
  UnlabeledRecord,
  SplitViolation,
  // edge-runtime
  ConnectionLost,
  SourceError,
  BindError,
  ProtocolError,
  // cli
  UsageError,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace screamkd

#endif  // SCREAMKD_ERROR_HPP_
