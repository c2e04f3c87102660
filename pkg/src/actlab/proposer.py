"""External proposer protocol: newline-delimited JSON over a child
process's standard streams, one request per proposal, one response back.

Request record::

    {"protocol_version": 1,
     "instruction": "<steering text shown to the proposer>",
     "parents": [{"expr_text": "(relu x)", "fitness": -0.093, "flop_cost": 1}],
     "budget": 64,
     "grammar_reference": "<one-line grammar summary>"}

Response record (exactly one line)::

    {"expr_text": "(gelu x)"}        on success
    {"error": "<reason>"}            when the proposer declines

The proposer process is long-lived: it reads request lines from stdin and
writes response lines to stdout until stdin closes.  Anything that is not
a well-formed response line is a protocol error; the evolution loop turns
protocol errors into failed candidates rather than crashing.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from typing import Sequence

__all__ = [
    "PROTOCOL_VERSION",
    "DEFAULT_INSTRUCTION",
    "GRAMMAR_REFERENCE",
    "ProposerTimeout",
    "ProposerProtocolError",
    "make_request",
    "parse_response",
    "ExternalProposer",
]

PROTOCOL_VERSION = 1

DEFAULT_INSTRUCTION = (
    "Act as a Senior Machine Learning Researcher specializing in model "
    "robustness and OOD (Out-of-Distribution) generalization.\n"
    "Your task is to iteratively improve the OOD Evaluation Metric by "
    "modifying the activation functions in the provided code, where larger "
    "values are better.\n"
    "Theoretical Justification: For each proposal, explicitly explain why it "
    "mathematically supports OOD generalization better than the baseline."
)

GRAMMAR_REFERENCE = (
    'expr := "x" | number | "(" op expr+ ")" ; '
    "unary: neg abs sign sin cos tanh exp log1p sqrt relu gelu sinc sigmoid ; "
    "binary: add sub mul div min max pow (pow exponent must be a constant) ; "
    "reductions: batch-mean, batch-std"
)


class ProposerTimeout(RuntimeError):
    pass


class ProposerProtocolError(RuntimeError):
    pass


def make_request(
    parents: Sequence[tuple[str, float, int]],
    budget: int,
    instruction: str = DEFAULT_INSTRUCTION,
) -> dict:
    return {
        "protocol_version": PROTOCOL_VERSION,
        "instruction": instruction,
        "parents": [
            {"expr_text": text, "fitness": fitness, "flop_cost": flop_cost}
            for text, fitness, flop_cost in parents
        ],
        "budget": budget,
        "grammar_reference": GRAMMAR_REFERENCE,
    }


def parse_response(line: str) -> str:
    """Extract the proposed expression text from one response line."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProposerProtocolError(f"response is not JSON: {exc}") from None
    if not isinstance(record, dict):
        raise ProposerProtocolError(f"response must be an object, got {type(record).__name__}")
    if "error" in record:
        raise ProposerProtocolError(f"proposer error: {record['error']}")
    if "expr_text" not in record or not isinstance(record["expr_text"], str):
        raise ProposerProtocolError("response lacks a string 'expr_text' field")
    return record["expr_text"]


class ExternalProposer:
    """One-request-one-response channel to a proposer child process."""

    def __init__(
        self,
        cmd: str | Sequence[str],
        instruction: str = DEFAULT_INSTRUCTION,
        timeout: float = 60.0,
    ):
        self.instruction = instruction
        self.timeout = timeout
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        self._buf = bytearray()

    def propose(self, parents: Sequence[tuple[str, float, int]], budget: int) -> str:
        if self._proc.poll() is not None:
            raise ProposerProtocolError(
                f"proposer exited with code {self._proc.returncode}"
            )
        request = make_request(parents, budget, self.instruction)
        payload = json.dumps(request) + "\n"
        try:
            self._proc.stdin.write(payload.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProposerProtocolError(f"cannot write to proposer: {exc}") from None
        line = self._read_line()
        return parse_response(line)

    def _read_line(self) -> str:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProposerTimeout(f"no response within {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise ProposerTimeout(f"no response within {self.timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProposerProtocolError("proposer closed its stdout")
            self._buf.extend(chunk)
        line, _, rest = bytes(self._buf).partition(b"\n")
        self._buf = bytearray(rest)
        return line.decode("utf-8")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ExternalProposer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
