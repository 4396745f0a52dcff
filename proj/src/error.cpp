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

#include "screamkd/error.hpp"

namespace screamkd {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedContainer: return "MalformedContainer";
    case Errc::UnsupportedEncoding: return "UnsupportedEncoding";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::IoError: return "IoError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidP: return "InvalidP";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NotADistribution: return "NotADistribution";
    case Errc::NotScalar: return "NotScalar";
    case Errc::DetachedNode: return "DetachedNode";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InputTooSmall: return "InputTooSmall";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::InvalidT: return "InvalidT";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::TeacherNotFrozen: return "TeacherNotFrozen";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingFile: return "MissingFile";
    case Errc::UnrecognizedEmotion: return "UnrecognizedEmotion";
    case Errc::MalformedName: return "MalformedName";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::TooFewRecords: return "TooFewRecords";
    case Errc::NoiseTooShort: return "NoiseTooShort";
    case Errc::RateMismatch: return "RateMismatch";
    case Errc::MissingCategory: return "MissingCategory";
    case Errc::UnlabeledRecord: return "UnlabeledRecord";
    case Errc::SplitViolation: return "SplitViolation";
    case Errc::ConnectionLost: return "ConnectionLost";
    case Errc::SourceError: return "SourceError";
    case Errc::BindError: return "BindError";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::UsageError: return "UsageError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

}  // namespace screamkd
