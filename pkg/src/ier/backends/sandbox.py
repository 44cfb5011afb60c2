"""Compile-and-run checks for generated software.

An artifact is written into a fresh temporary directory, then the configured
compile command and run command are executed there. Placeholders in command
templates: ``{python}`` (current interpreter), ``{files}`` (the artifact's source
files, i.e. paths ending in one of ``source_suffixes``, expanded into separate
arguments), ``{dir}`` (the sandbox directory).
"""

from __future__ import annotations

import logging
import shutil
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

from ..chain import Files, files_digest
from ..errors import ConfigurationError

log = logging.getLogger(__name__)

DEFAULT_COMPILE_CMD = ("{python}", "-m", "py_compile", "{files}")
DEFAULT_RUN_CMD = ("{python}", "main.py")
DEFAULT_SOURCE_SUFFIXES = (".py",)


@dataclass(frozen=True)
class RunOutcome:
    compiled: bool
    executed: bool
    log: str = ""


class Sandbox:
    def __init__(
        self,
        compile_cmd: tuple[str, ...] | list[str] = DEFAULT_COMPILE_CMD,
        run_cmd: tuple[str, ...] | list[str] | None = DEFAULT_RUN_CMD,
        compile_timeout: float = 30.0,
        run_timeout: float = 30.0,
        max_parallel: int = 4,
        source_suffixes: tuple[str, ...] | list[str] = DEFAULT_SOURCE_SUFFIXES,
    ):
        if not compile_cmd:
            raise ConfigurationError("compile command is empty")
        self.compile_cmd = tuple(compile_cmd)
        self.run_cmd = tuple(run_cmd) if run_cmd else None
        # empty means every file is a source file
        self.source_suffixes = tuple(source_suffixes)
        self.compile_timeout = compile_timeout
        self.run_timeout = run_timeout
        self._slots = threading.BoundedSemaphore(max(1, max_parallel))
        self._cache: dict[str, RunOutcome] = {}
        self._lock = threading.Lock()

    def _expand(self, template: tuple[str, ...], paths: list[str], workdir: Path) -> list[str]:
        argv: list[str] = []
        for part in template:
            if part == "{files}":
                argv.extend(paths)
            else:
                argv.append(part.replace("{python}", sys.executable).replace("{dir}", str(workdir)))
        return argv

    def _exec(self, argv: list[str], cwd: Path, timeout: float) -> tuple[bool, str]:
        try:
            proc = subprocess.run(
                argv, cwd=cwd, capture_output=True, text=True, timeout=timeout, stdin=subprocess.DEVNULL
            )
        except FileNotFoundError as exc:
            raise ConfigurationError(f"sandbox command not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            out = exc.stderr if isinstance(exc.stderr, str) else (exc.stderr or b"").decode("utf-8", "replace")
            return False, f"timeout after {timeout}s\n{out}"
        return proc.returncode == 0, (proc.stdout + proc.stderr)[-4000:]

    def compile_and_run(self, files: Files) -> RunOutcome:
        if not files:
            return RunOutcome(False, False, "empty artifact")
        key = files_digest(files)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        with self._slots:
            outcome = self._check(files)
        with self._lock:
            self._cache[key] = outcome
        return outcome

    def compiles(self, files: Files) -> bool:
        return self.compile_and_run(files).compiled

    def _check(self, files: Files) -> RunOutcome:
        try:
            workdir = Path(tempfile.mkdtemp(prefix="ier-sandbox-"))
        except OSError as exc:
            raise ConfigurationError(f"cannot create sandbox directory: {exc}") from exc
        try:
            paths = []
            for rel, content in sorted(files):
                pure = PurePosixPath(rel)
                if pure.is_absolute() or ".." in pure.parts:
                    return RunOutcome(False, False, f"refusing path outside sandbox: {rel}")
                target = workdir / pure
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")
                if not self.source_suffixes or pure.name.endswith(self.source_suffixes):
                    paths.append(str(pure))
            if not paths:
                return RunOutcome(False, False, "artifact has no source files")
            ok, out = self._exec(self._expand(self.compile_cmd, paths, workdir), workdir, self.compile_timeout)
            if not ok:
                return RunOutcome(False, False, out)
            if self.run_cmd is None:
                return RunOutcome(True, True, out)
            ran, run_out = self._exec(self._expand(self.run_cmd, paths, workdir), workdir, self.run_timeout)
            return RunOutcome(True, ran, run_out)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)
