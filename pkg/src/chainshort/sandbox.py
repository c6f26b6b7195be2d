"""Compilability check for candidate solutions.

A solution's files are written into a fresh temporary directory and the
profile's check command is run there with a timeout.  ``compilable`` is true
iff the command exits 0 in time.  A missing interpreter is an environment
error, never a zero score.
"""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .errors import InvalidArgument, SandboxEnvironmentError
from .graph import SolutionState

__all__ = ["ExecutionVerdict", "LanguageProfile", "PYTHON_PROFILE", "PYTHON_SYNTAX_PROFILE", "check_compilable"]

ENV_WHITELIST = ("PATH", "LANG", "LC_ALL", "SYSTEMROOT", "TMPDIR")
DIAGNOSTICS_LIMIT = 4000


@dataclass(frozen=True)
class LanguageProfile:
    """How to check one language.

    ``check_command_template`` is split with :func:`shlex.split`; ``{entry}``
    is replaced by the entry file and ``{python}`` by the running interpreter.
    """

    name: str
    check_command_template: str
    timeout_seconds: float = 10.0
    entry_candidates: tuple[str, ...] = ("main.py",)
    comment_prefixes: tuple[str, ...] = ("#",)
    extra_env: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (0 < self.timeout_seconds < float("inf")):
            raise InvalidArgument("timeout_seconds must be positive and finite")
        if "{entry}" not in self.check_command_template:
            raise InvalidArgument("check_command_template needs an {entry} placeholder")

    def command(self, entry: str) -> list[str]:
        return [
            part.replace("{entry}", entry).replace("{python}", sys.executable)
            for part in shlex.split(self.check_command_template)
        ]


# Runs the program under the timeout, so runtime errors count too.
PYTHON_PROFILE = LanguageProfile("python", "{python} -E -s -B {entry}")
# Bytecode compilation only.
PYTHON_SYNTAX_PROFILE = LanguageProfile("python-syntax", "{python} -E -s -B -m py_compile {entry}")


@dataclass(frozen=True)
class ExecutionVerdict:
    compilable: bool
    exit_code: int | None
    timed_out: bool
    diagnostics: str
    wall_time_seconds: float

    def __post_init__(self) -> None:
        if self.timed_out and self.compilable:
            raise InvalidArgument("a timed-out check cannot be compilable")


def _entry_file(files: list[tuple[str, str]], profile: LanguageProfile) -> str:
    paths = [p for p, _ in files]
    for candidate in profile.entry_candidates:
        if candidate in paths:
            return candidate
    return paths[0]


def _safe_relative(path: str) -> Path:
    rel = PurePosixPath(path.replace("\\", "/"))
    if rel.is_absolute() or ".." in rel.parts or not rel.parts:
        raise InvalidArgument(f"refusing to write outside the sandbox: {path!r}")
    return Path(*rel.parts)


def _scrubbed_env(profile: LanguageProfile) -> dict[str, str]:
    keep = set(ENV_WHITELIST) | set(profile.extra_env)
    return {k: v for k, v in os.environ.items() if k in keep}


def check_compilable(solution: SolutionState, profile: LanguageProfile = PYTHON_PROFILE) -> ExecutionVerdict:
    """Run ``profile``'s check command against ``solution``'s files."""
    if not solution.files:
        return ExecutionVerdict(False, None, False, "empty solution", 0.0)

    entry = _entry_file(solution.files, profile)
    command = profile.command(entry)
    with tempfile.TemporaryDirectory(prefix="chainshort-") as workdir:
        for path, body in solution.files:
            target = Path(workdir) / _safe_relative(path)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(body, encoding="utf-8")

        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                command,
                cwd=workdir,
                env=_scrubbed_env(profile),
                stdin=subprocess.DEVNULL,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except FileNotFoundError as exc:
            raise SandboxEnvironmentError(f"check command not found: {command[0]!r}") from exc

        try:
            stdout, stderr = proc.communicate(timeout=profile.timeout_seconds)
            timed_out = False
        except subprocess.TimeoutExpired:
            # kill the whole process group so forked children die too
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            stdout, stderr = proc.communicate()
            timed_out = True
        elapsed = time.monotonic() - start

    diagnostics = (stderr or stdout or b"").decode("utf-8", "replace")[-DIAGNOSTICS_LIMIT:]
    if timed_out:
        diagnostics = f"timed out after {profile.timeout_seconds}s\n{diagnostics}"
        return ExecutionVerdict(False, proc.returncode, True, diagnostics, elapsed)
    return ExecutionVerdict(proc.returncode == 0, proc.returncode, False, diagnostics, elapsed)
