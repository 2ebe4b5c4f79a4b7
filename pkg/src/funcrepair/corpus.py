"""Bug data model and on-disk corpus loading.

A corpus is a directory with a `corpus.json` manifest, a crafted buggy/fixed
example pair, and one directory per bug holding `task.json`, the buggy
checkout under `src/`, optional developer fixes under `fix/`, the bug report
in `report.md`, trigger-test bodies under `tests/`, and `comments.txt`.
"""

from __future__ import annotations

import enum
import json
import logging
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from .runcmd import CommandRunner, SubprocessRunner, substitute_argv

log = logging.getLogger(__name__)

MANIFEST_NAME = "corpus.json"
TASK_FILE = "task.json"


class CorpusError(Exception):
    """Corpus manifest or task validation failure."""


class Language(enum.Enum):
    JAVA_LIKE = "java-like"
    PYTHON_LIKE = "python-like"

    @property
    def comment_marker(self) -> str:
        return "//" if self is Language.JAVA_LIKE else "#"


class TaskKind(enum.Enum):
    SINGLE_FUNCTION = "single_function"
    MULTI_FUNCTION = "multi_function"


@dataclass(frozen=True)
class FunctionSite:
    """One buggy function: a line span in a project file plus its verbatim text."""

    file_path: str
    start_line: int
    end_line: int
    function_text: str
    language: Language

    def __post_init__(self):
        if self.start_line < 1 or self.start_line > self.end_line:
            raise CorpusError(
                f"site {self.file_path}: start_line {self.start_line} must be "
                f">= 1 and <= end_line {self.end_line}"
            )
        expected = self.end_line - self.start_line + 1
        got = len(self.function_text.splitlines())
        if got != expected:
            raise CorpusError(
                f"site {self.file_path}: function_text has {got} lines, "
                f"span [{self.start_line}, {self.end_line}] needs {expected}"
            )

    @property
    def line_count(self) -> int:
        return self.end_line - self.start_line + 1


@dataclass(frozen=True)
class BugReport:
    """Issue title and description; empty strings stand in for a missing report."""

    issue_title: str = ""
    issue_description: str = ""


@dataclass(frozen=True)
class TriggerTest:
    name: str
    body_text: str


@dataclass(frozen=True)
class ProjectInfo:
    """Project-specific auxiliary information: trigger tests, error messages, comments."""

    trigger_tests: tuple[TriggerTest, ...] = ()
    error_messages: tuple[str, ...] = ()
    buggy_comments: str = ""


@dataclass(frozen=True)
class CommandSet:
    """Declared project commands; the toolkit never infers a build system.

    `checkout_cmd` may use `{src}` and `{workspace}` placeholders. Exit codes
    in `test_failure_exit_codes` mean "tests ran and failed"; any other
    nonzero exit from the test harness is a harness crash. When the harness
    supports it, appending a test name to `test_cmd` runs only that test
    (used to capture per-trigger-test error messages).
    """

    checkout_cmd: tuple[str, ...]
    compile_cmd: tuple[str, ...]
    test_cmd: tuple[str, ...]
    compile_timeout: float
    test_timeout: float
    workdir: str = "{workspace}"
    failing_test_pattern: str | None = None
    test_failure_exit_codes: tuple[int, ...] = (1,)


@dataclass(frozen=True)
class ExamplePair:
    buggy_text: str
    fixed_text: str


@dataclass(frozen=True)
class RepairTask:
    """One bug: its function site(s), auxiliary information, fix, and commands."""

    bug_id: str
    project: str
    sites: tuple[FunctionSite, ...]
    bug_report: BugReport
    project_info: ProjectInfo
    fault_lines: tuple[tuple[int, ...], ...]
    commands: CommandSet
    developer_fix: tuple[str, ...] | None = None
    historical_examples: tuple[ExamplePair, ...] = ()
    source_root: Path | None = None

    def __post_init__(self):
        if not self.sites:
            raise CorpusError(f"{self.bug_id}: sites must be nonempty")
        if len(self.fault_lines) != len(self.sites):
            raise CorpusError(
                f"{self.bug_id}: fault_lines has {len(self.fault_lines)} entries "
                f"for {len(self.sites)} sites"
            )
        for site, lines in zip(self.sites, self.fault_lines):
            for line in lines:
                if not 1 <= line <= site.line_count:
                    raise CorpusError(
                        f"{self.bug_id}: fault line {line} outside function "
                        f"range 1..{site.line_count} in {site.file_path}"
                    )
        if self.developer_fix is not None and len(self.developer_fix) != len(self.sites):
            raise CorpusError(
                f"{self.bug_id}: developer_fix has {len(self.developer_fix)} entries "
                f"for {len(self.sites)} sites"
            )

    @property
    def language(self) -> Language:
        return self.sites[0].language


@dataclass(frozen=True)
class Corpus:
    """Immutable task collection plus the bundled crafted example pair."""

    tasks: dict[str, RepairTask]
    crafted_example: ExamplePair
    root: Path

    def task(self, bug_id: str) -> RepairTask:
        try:
            return self.tasks[bug_id]
        except KeyError:
            raise CorpusError(f"unknown bug id: {bug_id}") from None

    def __iter__(self):
        return iter(self.tasks.values())

    def __len__(self) -> int:
        return len(self.tasks)


def classify_task(task: RepairTask) -> TaskKind:
    """Single-function iff the task has exactly one site."""

    return TaskKind.SINGLE_FUNCTION if len(task.sites) == 1 else TaskKind.MULTI_FUNCTION


def load_corpus(manifest_root: str | Path, skip_invalid: bool = False) -> Corpus:
    """Load and validate a corpus from `manifest_root`.

    Every task is checked against its invariants, including byte-identity of
    each site's function_text with the referenced source slice. By default a
    single invalid task fails the whole load with a diagnostic naming the bug
    and field; with skip_invalid=True invalid tasks are dropped with a logged
    warning instead.
    """

    root = Path(manifest_root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CorpusError(f"missing manifest: {manifest_path}")
    manifest = _read_json(manifest_path)

    crafted = manifest.get("crafted_example")
    if not isinstance(crafted, dict) or "buggy" not in crafted or "fixed" not in crafted:
        raise CorpusError("corpus.json: crafted_example must map 'buggy' and 'fixed' to files")
    crafted_example = ExamplePair(
        buggy_text=_read_text(root / crafted["buggy"]),
        fixed_text=_read_text(root / crafted["fixed"]),
    )

    bug_ids = manifest.get("bugs")
    if not isinstance(bug_ids, list) or not all(isinstance(b, str) for b in bug_ids):
        raise CorpusError("corpus.json: bugs must be a list of bug ids")
    if len(set(bug_ids)) != len(bug_ids):
        raise CorpusError("corpus.json: duplicate bug ids")

    tasks: dict[str, RepairTask] = {}
    failures: list[str] = []
    for bug_id in bug_ids:
        try:
            task = _load_task(root / "bugs" / bug_id, bug_id)
            if crafted_example.buggy_text == task.sites[0].function_text:
                raise CorpusError(f"{bug_id}: crafted example equals the task's buggy function")
            tasks[bug_id] = task
        except CorpusError as exc:
            if skip_invalid:
                log.warning("skipping invalid task %s: %s", bug_id, exc)
                failures.append(f"{bug_id}: {exc}")
            else:
                failures.append(f"{bug_id}: {exc}")
    if failures and not skip_invalid:
        raise CorpusError("invalid tasks:\n" + "\n".join(failures))

    return Corpus(tasks=tasks, crafted_example=crafted_example, root=root)


def _load_task(bug_dir: Path, bug_id: str) -> RepairTask:
    task_path = bug_dir / TASK_FILE
    if not task_path.is_file():
        raise CorpusError(f"missing {TASK_FILE} under {bug_dir}")
    raw = _read_json(task_path)

    if raw.get("bug_id") != bug_id:
        raise CorpusError(f"field bug_id: {raw.get('bug_id')!r} does not match directory {bug_id!r}")
    project = _require_str(raw, "project", bug_id)
    language = _parse_language(raw, bug_id)

    src_root = bug_dir / "src"
    if not src_root.is_dir():
        raise CorpusError(f"missing buggy checkout directory {src_root}")

    sites = _parse_sites(raw, language, src_root, bug_id)
    fault_lines = _parse_fault_lines(raw, len(sites), bug_id)
    commands = _parse_commands(raw, bug_id)
    bug_report = _load_report(bug_dir / "report.md")
    project_info = ProjectInfo(
        trigger_tests=_load_trigger_tests(raw, bug_dir, bug_id),
        error_messages=tuple(_require_str_list(raw.get("error_messages", []), "error_messages", bug_id)),
        buggy_comments=_read_text_optional(bug_dir / "comments.txt"),
    )
    developer_fix = _load_developer_fix(bug_dir / "fix", len(sites))
    historical = tuple(
        ExamplePair(buggy_text=pair["buggy"], fixed_text=pair["fixed"])
        for pair in raw.get("historical_examples", [])
    )

    return RepairTask(
        bug_id=bug_id,
        project=project,
        sites=sites,
        bug_report=bug_report,
        project_info=project_info,
        fault_lines=fault_lines,
        commands=commands,
        developer_fix=developer_fix,
        historical_examples=historical,
        source_root=src_root,
    )


def _parse_language(raw: dict, bug_id: str) -> Language:
    value = raw.get("language")
    try:
        return Language(value)
    except ValueError:
        raise CorpusError(f"field language: {value!r} is not a known language") from None


def _parse_sites(raw: dict, language: Language, src_root: Path, bug_id: str) -> tuple[FunctionSite, ...]:
    entries = raw.get("sites")
    if not isinstance(entries, list) or not entries:
        raise CorpusError("field sites: must be a nonempty list")
    sites = []
    for i, entry in enumerate(entries):
        for key in ("file_path", "start_line", "end_line", "function_text"):
            if key not in entry:
                raise CorpusError(f"field sites[{i}].{key}: missing")
        site = FunctionSite(
            file_path=entry["file_path"],
            start_line=entry["start_line"],
            end_line=entry["end_line"],
            function_text=entry["function_text"],
            language=language,
        )
        actual = slice_file_lines(src_root / site.file_path, site.start_line, site.end_line)
        if actual != site.function_text:
            raise CorpusError(
                f"field sites[{i}].function_text: does not match the source slice "
                f"of {site.file_path} lines {site.start_line}-{site.end_line}"
            )
        sites.append(site)
    return tuple(sites)


def _parse_fault_lines(raw: dict, n_sites: int, bug_id: str) -> tuple[tuple[int, ...], ...]:
    value = raw.get("fault_lines", [])
    if not isinstance(value, list):
        raise CorpusError("field fault_lines: must be a list")
    # A flat int list is accepted as shorthand for a single-site task.
    if all(isinstance(v, int) for v in value):
        if n_sites != 1 and value:
            raise CorpusError("field fault_lines: flat list given for a multi-site task")
        per_site = [list(value)] + [[] for _ in range(n_sites - 1)]
    else:
        per_site = [list(v) for v in value]
        if len(per_site) != n_sites:
            raise CorpusError(
                f"field fault_lines: {len(per_site)} site entries for {n_sites} sites"
            )
    return tuple(tuple(v) for v in per_site)


def _parse_commands(raw: dict, bug_id: str) -> CommandSet:
    entry = raw.get("commands")
    if not isinstance(entry, dict):
        raise CorpusError("field commands: missing or not an object")
    for key in ("checkout_cmd", "compile_cmd", "test_cmd", "compile_timeout", "test_timeout"):
        if key not in entry:
            raise CorpusError(f"field commands.{key}: missing")
    return CommandSet(
        checkout_cmd=tuple(_require_str_list(entry["checkout_cmd"], "commands.checkout_cmd", bug_id)),
        compile_cmd=tuple(_require_str_list(entry["compile_cmd"], "commands.compile_cmd", bug_id)),
        test_cmd=tuple(_require_str_list(entry["test_cmd"], "commands.test_cmd", bug_id)),
        compile_timeout=float(entry["compile_timeout"]),
        test_timeout=float(entry["test_timeout"]),
        workdir=entry.get("workdir", "{workspace}"),
        failing_test_pattern=entry.get("failing_test_pattern"),
        test_failure_exit_codes=tuple(entry.get("test_failure_exit_codes", [1])),
    )


def _load_report(path: Path) -> BugReport:
    if not path.is_file():
        return BugReport()
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return BugReport()
    title, _, rest = text.partition("\n")
    return BugReport(issue_title=title.strip(), issue_description=rest.strip())


def _load_trigger_tests(raw: dict, bug_dir: Path, bug_id: str) -> tuple[TriggerTest, ...]:
    names = _require_str_list(raw.get("trigger_tests", []), "trigger_tests", bug_id)
    tests = []
    for name in names:
        body_path = bug_dir / "tests" / f"{name}.txt"
        if not body_path.is_file():
            raise CorpusError(f"field trigger_tests: missing body file {body_path.name}")
        tests.append(TriggerTest(name=name, body_text=body_path.read_text(encoding="utf-8")))
    return tuple(tests)


def _load_developer_fix(fix_dir: Path, n_sites: int) -> tuple[str, ...] | None:
    if not fix_dir.is_dir():
        return None
    texts = []
    for i in range(n_sites):
        path = fix_dir / f"site_{i}.txt"
        if not path.is_file():
            raise CorpusError(f"field developer_fix: missing {path.name} (one file per site)")
        texts.append(path.read_text(encoding="utf-8"))
    return tuple(texts)


def slice_file_lines(path: Path, start_line: int, end_line: int) -> str:
    """Byte-exact slice of physical lines [start_line, end_line], 1-based inclusive."""

    if not path.is_file():
        raise CorpusError(f"referenced source file missing: {path}")
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    if end_line > len(lines):
        raise CorpusError(f"{path}: end_line {end_line} past end of file ({len(lines)} lines)")
    return "".join(lines[start_line - 1 : end_line])


def collect_error_messages(
    task: RepairTask,
    runner: CommandRunner | None = None,
    workspace_dir: str | Path | None = None,
) -> ProjectInfo:
    """Run each trigger test on the buggy checkout and capture its failure output.

    Returns a ProjectInfo with error_messages replaced, one block per trigger
    test in order. A trigger test that passes on the buggy version yields an
    empty block and a warning, since trigger tests are expected to fail.
    """

    runner = runner or SubprocessRunner()
    if task.source_root is None:
        raise CorpusError(f"{task.bug_id}: task has no source_root; loaded outside a corpus?")

    owns_dir = workspace_dir is None
    base = Path(tempfile.mkdtemp(prefix=f"fr-{task.bug_id}-")) if owns_dir else Path(workspace_dir)
    workspace = base / "checkout"
    workspace.mkdir(parents=True, exist_ok=True)
    try:
        _run_checkout(task, workspace, runner)
        blocks = []
        for test in task.project_info.trigger_tests:
            argv = list(task.commands.test_cmd) + [test.name]
            result = runner.run(argv, cwd=workspace, timeout_s=task.commands.test_timeout)
            if result.exit_code == 0:
                log.warning(
                    "%s: trigger test %s passes on the buggy version", task.bug_id, test.name
                )
                blocks.append("")
            elif result.timed_out or result.exit_code in task.commands.test_failure_exit_codes:
                blocks.append(result.combined_output)
            else:
                raise HarnessCrash(
                    f"{task.bug_id}: test harness crashed on {test.name} "
                    f"(exit {result.exit_code}, not in declared failure codes "
                    f"{task.commands.test_failure_exit_codes}): {result.combined_output[:500]}"
                )
        return replace(task.project_info, error_messages=tuple(blocks))
    finally:
        if owns_dir:
            shutil.rmtree(base, ignore_errors=True)


class HarnessCrash(RuntimeError):
    """Test harness exited outside its declared failure-code contract."""


class CheckoutError(RuntimeError):
    """Declared checkout command failed."""


def _run_checkout(task: RepairTask, workspace: Path, runner: CommandRunner) -> None:
    mapping = {"src": str(task.source_root), "workspace": str(workspace)}
    argv = substitute_argv(task.commands.checkout_cmd, mapping)
    workdir = Path(substitute_argv([task.commands.workdir], mapping)[0])
    result = runner.run(argv, cwd=workdir, timeout_s=task.commands.compile_timeout)
    if result.timed_out or result.exit_code != 0:
        raise CheckoutError(f"{task.bug_id}: checkout failed: {result.combined_output[:500]}")


def serialize_corpus(corpus: Corpus, dest_root: str | Path) -> Path:
    """Write `corpus` back out in the on-disk manifest format (round-trip aid)."""

    dest = Path(dest_root)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "crafted").mkdir(exist_ok=True)
    (dest / "crafted" / "buggy.txt").write_text(corpus.crafted_example.buggy_text, encoding="utf-8")
    (dest / "crafted" / "fixed.txt").write_text(corpus.crafted_example.fixed_text, encoding="utf-8")
    manifest = {
        "version": 1,
        "crafted_example": {"buggy": "crafted/buggy.txt", "fixed": "crafted/fixed.txt"},
        "bugs": list(corpus.tasks),
    }
    (dest / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    for bug_id, task in corpus.tasks.items():
        bug_dir = dest / "bugs" / bug_id
        bug_dir.mkdir(parents=True, exist_ok=True)
        if task.source_root is not None:
            shutil.copytree(task.source_root, bug_dir / "src", dirs_exist_ok=True)
        if task.bug_report.issue_title or task.bug_report.issue_description:
            (bug_dir / "report.md").write_text(
                task.bug_report.issue_title + "\n\n" + task.bug_report.issue_description + "\n",
                encoding="utf-8",
            )
        else:
            (bug_dir / "report.md").write_text("", encoding="utf-8")
        (bug_dir / "comments.txt").write_text(task.project_info.buggy_comments, encoding="utf-8")
        tests_dir = bug_dir / "tests"
        tests_dir.mkdir(exist_ok=True)
        for test in task.project_info.trigger_tests:
            (tests_dir / f"{test.name}.txt").write_text(test.body_text, encoding="utf-8")
        if task.developer_fix is not None:
            fix_dir = bug_dir / "fix"
            fix_dir.mkdir(exist_ok=True)
            for i, text in enumerate(task.developer_fix):
                (fix_dir / f"site_{i}.txt").write_text(text, encoding="utf-8")
        record = {
            "bug_id": task.bug_id,
            "project": task.project,
            "language": task.language.value,
            "sites": [
                {
                    "file_path": s.file_path,
                    "start_line": s.start_line,
                    "end_line": s.end_line,
                    "function_text": s.function_text,
                }
                for s in task.sites
            ],
            "fault_lines": [list(v) for v in task.fault_lines],
            "trigger_tests": [t.name for t in task.project_info.trigger_tests],
            "error_messages": list(task.project_info.error_messages),
            "historical_examples": [
                {"buggy": p.buggy_text, "fixed": p.fixed_text} for p in task.historical_examples
            ],
            "commands": {
                "checkout_cmd": list(task.commands.checkout_cmd),
                "compile_cmd": list(task.commands.compile_cmd),
                "test_cmd": list(task.commands.test_cmd),
                "compile_timeout": task.commands.compile_timeout,
                "test_timeout": task.commands.test_timeout,
                "workdir": task.commands.workdir,
                "failing_test_pattern": task.commands.failing_test_pattern,
                "test_failure_exit_codes": list(task.commands.test_failure_exit_codes),
            },
        }
        (bug_dir / TASK_FILE).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return dest


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc


def _read_text(path: Path) -> str:
    if not path.is_file():
        raise CorpusError(f"referenced file missing: {path}")
    return path.read_text(encoding="utf-8")


def _read_text_optional(path: Path) -> str:
    return path.read_text(encoding="utf-8") if path.is_file() else ""


def _require_str(raw: dict, key: str, bug_id: str) -> str:
    value = raw.get(key)
    if not isinstance(value, str) or not value:
        raise CorpusError(f"field {key}: missing or empty")
    return value


def _require_str_list(value, key: str, bug_id: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusError(f"field {key}: must be a list of strings")
    return value
