"""Subprocess execution with timeouts, shared by the corpus and validator layers."""

from __future__ import annotations

import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence


@dataclass(frozen=True)
class RunResult:
    """Outcome of one command invocation."""

    exit_code: int | None
    stdout: str
    stderr: str
    duration_ms: int
    timed_out: bool

    @property
    def combined_output(self) -> str:
        if self.stdout and self.stderr:
            return self.stdout + ("" if self.stdout.endswith("\n") else "\n") + self.stderr
        return self.stdout or self.stderr


class CommandRunner(Protocol):
    def run(self, argv: Sequence[str], cwd: Path, timeout_s: float) -> RunResult:
        ...


class SubprocessRunner:
    """Runs commands in a subprocess, killing the process group on timeout."""

    def run(self, argv: Sequence[str], cwd: Path, timeout_s: float) -> RunResult:
        start = time.monotonic()
        try:
            proc = subprocess.run(
                list(argv),
                cwd=str(cwd),
                capture_output=True,
                text=True,
                timeout=timeout_s,
            )
            elapsed = int((time.monotonic() - start) * 1000)
            return RunResult(proc.returncode, proc.stdout, proc.stderr, elapsed, False)
        except subprocess.TimeoutExpired as exc:
            elapsed = int((time.monotonic() - start) * 1000)
            stdout = _decode(exc.stdout)
            stderr = _decode(exc.stderr)
            return RunResult(None, stdout, stderr, elapsed, True)
        except FileNotFoundError as exc:
            raise CommandNotRunnable(f"command not executable: {argv[0]}") from exc


class CommandNotRunnable(RuntimeError):
    """The declared command could not be started at all."""


def _decode(data: bytes | str | None) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    return data


def substitute_argv(argv: Sequence[str], mapping: Mapping[str, str]) -> list[str]:
    """Fill `{placeholder}` slots in declared command argv lists."""

    out = []
    for part in argv:
        for key, value in mapping.items():
            part = part.replace("{" + key + "}", value)
        out.append(part)
    return out
