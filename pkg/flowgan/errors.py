# Copyright 2024 The FlowGAN Authors.
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

"""Exception hierarchy for flowgan.

Domain errors subclass ValueError so that callers validating input the usual
way keep working. Each category carries the exit code used by the CLI.
"""

from typing import Any, Mapping, Optional, Sequence


class FlowGanError(Exception):
    """Base class for all flowgan errors."""

    exit_code = 1


class ParseError(FlowGanError, ValueError):
    """Raised for malformed feed lines, time regressions and bad caches."""

    exit_code = 3

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(location + message)
        self.path = path
        self.line = line


class ConfigError(FlowGanError, ValueError):
    """Raised for invalid run configurations and missing artifacts."""

    exit_code = 4


class NumericError(FlowGanError, ArithmeticError):
    """Raised when a loss, gradient or statistic stops being finite."""

    exit_code = 5

    def __init__(self, message: str, diagnostics: Optional[Mapping[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
            message = f"{message} ({details})"
        super().__init__(message)


class DegenerateSampleError(NumericError, ValueError):
    """Raised when a statistic is undefined for the given sample."""


class BookError(FlowGanError, ValueError):
    """Base class for order book errors."""


class RejectedEventError(BookError):
    """Raised when an order event is malformed (e.g. non-positive volume)."""


class NoQuoteError(BookError):
    """Raised when a reference price is requested from an empty side."""


class UnfilledMarketError(BookError):
    """Raised when a market order exhausts the opposite side.

    The book has already been updated with the fills that did happen.
    """

    def __init__(self, residue: float, fills: Sequence[Any] = ()):
        super().__init__(f"market order left {residue} unfilled")
        self.residue = residue
        self.fills = list(fills)


class EncodeError(FlowGanError, ValueError):
    """Raised when an event cannot be mapped to a token."""


class SamplerError(FlowGanError, ValueError):
    """Raised when an empirical sampler cannot be fitted."""
