# Copyright 2026 The simulmt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from ._simulmt import (
    BOS,
    EOS,
    PAD,
    UNK,
    BpeModel,
    Model,
    RuntimeFailure,
    ValidationError,
    asr_normalize,
    average_lagging,
    corpus_bleu,
    detect_endpoint,
    gen_toy_corpus,
    number_to_words,
    segment_stream,
    wait_k_z,
)

__all__ = [
    "BOS",
    "EOS",
    "PAD",
    "UNK",
    "BpeModel",
    "Model",
    "RuntimeFailure",
    "ValidationError",
    "asr_normalize",
    "average_lagging",
    "corpus_bleu",
    "detect_endpoint",
    "gen_toy_corpus",
    "number_to_words",
    "segment_stream",
    "wait_k_z",
]
