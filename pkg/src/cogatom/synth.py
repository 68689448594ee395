"""Problem synthesis, dual-stage quality filtering, and dataset assembly.

A complete reasoning combination is rendered into a generation prompt; the
generator's question is screened by a judge on four problem dimensions, a
teacher model writes the step-by-step solution, and the judge screens the
solution on five more dimensions. Only rows passing every bar, with an
extractable final answer, enter the dataset. Every client failure is
fail-closed: it can remove a record, never admit one.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .clients import (
    PROBLEM_DIMS,
    SOLUTION_DIMS,
    ChatClient,
    ClientRequest,
    TranscriptRecorder,
    call_and_parse,
    parse_score_map,
)
from .errors import ValidationError
from .refine import ReasoningCombination

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QualityBars:
    problem_bar: int = 3
    solution_bar: int = 3


@dataclass
class QualityReport:
    problem_scores: dict[str, int] = field(default_factory=dict)
    solution_scores: dict[str, int] = field(default_factory=dict)
    passed: bool = False
    failing: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "problem_scores": self.problem_scores,
            "solution_scores": self.solution_scores,
            "passed": self.passed,
            "failing": list(self.failing),
        }


@dataclass
class SynthesizedProblem:
    problem_id: str
    question: str
    solution: str
    answer: str
    combo_id: str
    generator_tag: str
    quality: QualityReport

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "question": self.question,
            "solution": self.solution,
            "answer": self.answer,
            "combo_id": self.combo_id,
            "generator_tag": self.generator_tag,
            "quality": self.quality.to_dict(),
        }


@dataclass
class SynthOutcome:
    """One combination's fate: either a problem or a rejection reason."""

    combo_id: str
    problem: SynthesizedProblem | None = None
    reason: str | None = None


# ---------------------------------------------------------------------------
# Parsing


_QUESTION_RE = re.compile(r"<question>(.*?)</question>", re.DOTALL)
_ANSWER_LINE_RE = re.compile(r"Answer:\s*(.+?)\s*$")


def parse_question(text: str) -> str | None:
    """Question text from a <question> block, else the whole response; None if blank."""
    m = _QUESTION_RE.search(text)
    candidate = m.group(1) if m else text
    candidate = candidate.strip()
    return candidate or None


def extract_boxed(text: str) -> str | None:
    """Contents of the last \\boxed{...} group, brace-matched for nesting."""
    marker = "\\boxed{"
    start = text.rfind(marker)
    if start == -1:
        return None
    depth = 0
    for i in range(start + len(marker) - 1, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start + len(marker) : i]
    return None


def extract_answer(text: str) -> str | None:
    """Final answer: last boxed group, else the last 'Answer: <expr>' line.

    Trailing whitespace and one layer of outer '$' are stripped; an empty
    extraction is reported as missing.
    """
    answer = extract_boxed(text)
    if answer is None:
        for line in reversed(text.splitlines()):
            m = _ANSWER_LINE_RE.search(line)
            if m:
                answer = m.group(1)
                break
    if answer is None:
        return None
    answer = answer.strip()
    if len(answer) >= 2 and answer.startswith("$") and answer.endswith("$"):
        answer = answer[1:-1].strip()
    return answer or None


# ---------------------------------------------------------------------------
# Stage operations


def render_atoms(atom_texts: Sequence[str]) -> str:
    return "\n".join(f"- {t}" for t in atom_texts)


def generate_problem(
    combo: ReasoningCombination,
    atom_texts: Mapping[int, str],
    client: ChatClient,
    template_text: str,
    max_retries: int = 2,
) -> str | None:
    """Render the generation prompt and parse the question; None after retries.

    Incomplete combinations are rejected before any client call.
    """
    if combo.incomplete:
        raise ValidationError(f"combination {combo.combo_id} is incomplete; not generating")
    prompt = template_text.format(atoms=render_atoms([atom_texts[a] for a in combo.atoms]))
    request = ClientRequest(template_id="problem_generation", rendered_prompt=prompt)
    question, _, attempts = call_and_parse(client, request, parse_question, max_retries)
    if question is None:
        log.warning("generation failed for %s after %d attempts", combo.combo_id, attempts)
        return None
    return question


def filter_problem(
    question: str,
    judge: ChatClient,
    bars: QualityBars,
    template_text: str,
    max_retries: int = 2,
) -> QualityReport:
    """Stage-1 screen: four problem dimensions, fail-closed on judge failure."""
    prompt = template_text.format(question=question)
    request = ClientRequest(template_id="problem_quality", rendered_prompt=prompt)
    scores, _, _ = call_and_parse(
        judge, request, lambda t: parse_score_map(t, PROBLEM_DIMS), max_retries
    )
    if scores is None:
        return QualityReport(passed=False, failing=("problem_judge_unparseable",))
    failing = tuple(d for d in PROBLEM_DIMS if scores[d] < bars.problem_bar)
    return QualityReport(problem_scores=scores, passed=not failing, failing=failing)


def generate_solution(
    question: str,
    teacher: ChatClient,
    template_text: str,
    max_retries: int = 2,
) -> tuple[str, str | None, int]:
    """Teacher solution (verbatim), extracted answer, and the response tokens."""
    prompt = template_text.format(question=question)
    request = ClientRequest(template_id="solution_generation", rendered_prompt=prompt)

    def parse(text: str):
        ans = extract_answer(text)
        return (text, ans) if ans is not None else None

    value, response, _ = call_and_parse(teacher, request, parse, max_retries)
    if value is None:
        return (response.text if response is not None else "", None, 0)
    solution, answer = value
    return solution, answer, response.token_count


def filter_solution(
    report: QualityReport,
    question: str,
    solution: str,
    judge: ChatClient,
    bars: QualityBars,
    template_text: str,
    max_retries: int = 2,
) -> QualityReport:
    """Stage-2 screen: five solution dimensions merged into the report."""
    prompt = template_text.format(question=question, solution=solution)
    request = ClientRequest(template_id="solution_quality", rendered_prompt=prompt)
    scores, _, _ = call_and_parse(
        judge, request, lambda t: parse_score_map(t, SOLUTION_DIMS), max_retries
    )
    if scores is None:
        return QualityReport(
            problem_scores=report.problem_scores,
            passed=False,
            failing=("solution_judge_unparseable",),
        )
    failing = tuple(d for d in SOLUTION_DIMS if scores[d] < bars.solution_bar)
    problem_ok = bool(report.problem_scores) and all(
        s >= bars.problem_bar for s in report.problem_scores.values()
    )
    return QualityReport(
        problem_scores=report.problem_scores,
        solution_scores=scores,
        passed=problem_ok and not failing,
        failing=report.failing + failing,
    )


@dataclass
class SynthClients:
    generator: ChatClient
    judge: ChatClient
    teacher: ChatClient


@dataclass
class SynthConfig:
    generator_tag: str = "short_cot"
    bars: QualityBars = field(default_factory=QualityBars)
    max_retries: int = 2
    max_inflight: int = 1
    reject_sampling: bool = True


def synthesize_one(
    combo: ReasoningCombination,
    atom_texts: Mapping[int, str],
    clients: SynthClients,
    templates: Mapping[str, str],
    cfg: SynthConfig,
) -> SynthOutcome:
    if combo.incomplete:
        return SynthOutcome(combo.combo_id, reason="incomplete_combination")
    question = generate_problem(
        combo, atom_texts, clients.generator, templates["problem_generation"], cfg.max_retries
    )
    if question is None:
        return SynthOutcome(combo.combo_id, reason="generation_failed")

    if cfg.reject_sampling:
        report = filter_problem(
            question, clients.judge, cfg.bars, templates["problem_quality"], cfg.max_retries
        )
        if not report.problem_scores:
            return SynthOutcome(combo.combo_id, reason="problem_judge_unparseable")
        if report.failing:
            return SynthOutcome(combo.combo_id, reason="problem_quality")
    else:
        report = QualityReport(passed=True)

    solution, answer, _ = generate_solution(
        question, clients.teacher, templates["solution_generation"], cfg.max_retries
    )
    if answer is None:
        return SynthOutcome(combo.combo_id, reason="answer_missing")

    if cfg.reject_sampling:
        report = filter_solution(
            report,
            question,
            solution,
            clients.judge,
            cfg.bars,
            templates["solution_quality"],
            cfg.max_retries,
        )
        if not report.solution_scores:
            return SynthOutcome(combo.combo_id, reason="solution_judge_unparseable")
        if not report.passed:
            return SynthOutcome(combo.combo_id, reason="solution_quality")

    problem = SynthesizedProblem(
        problem_id=f"q-{combo.combo_id}",
        question=question,
        solution=solution,
        answer=answer,
        combo_id=combo.combo_id,
        generator_tag=cfg.generator_tag,
        quality=report,
    )
    return SynthOutcome(combo.combo_id, problem=problem)


def synthesize_dataset(
    combos: Sequence[ReasoningCombination],
    atom_texts: Mapping[int, str],
    clients: SynthClients,
    templates: Mapping[str, str],
    cfg: SynthConfig,
) -> tuple[list[SynthOutcome], list[dict]]:
    """Run synthesis over all combinations with bounded parallelism.

    Client traffic is recorded per combination and concatenated in input
    order, so transcripts (and therefore replays) are deterministic even
    when max_inflight > 1.
    """

    def work(combo: ReasoningCombination) -> tuple[SynthOutcome, list[dict]]:
        gen = TranscriptRecorder(clients.generator)
        judge = TranscriptRecorder(clients.judge)
        teacher = TranscriptRecorder(clients.teacher)
        outcome = synthesize_one(
            combo, atom_texts, SynthClients(gen, judge, teacher), templates, cfg
        )
        return outcome, gen.records + judge.records + teacher.records

    if cfg.max_inflight > 1 and len(combos) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_inflight) as pool:
            results = list(pool.map(work, combos))
    else:
        results = [work(c) for c in combos]

    outcomes = [r[0] for r in results]
    transcript = [rec for _, records in results for rec in records]
    return outcomes, transcript


def assemble_dataset(outcomes: Iterable[SynthOutcome]) -> tuple[list[dict], dict]:
    """Final retention pass: passed quality, non-missing answer, unique combo.

    Returns the dataset rows and a manifest counting every rejection reason.
    """
    rows: list[dict] = []
    rejected: dict[str, int] = {}
    seen: set[str] = set()
    total = 0
    for outcome in outcomes:
        total += 1
        duplicate = outcome.combo_id in seen
        seen.add(outcome.combo_id)
        reason = "duplicate_combo" if duplicate else outcome.reason
        if reason is None:
            problem = outcome.problem
            if problem is None or not problem.answer:
                reason = "answer_missing"
            elif not problem.quality.passed:
                reason = "quality_failed"
        if reason is not None:
            rejected[reason] = rejected.get(reason, 0) + 1
            continue
        rows.append(outcome.problem.to_dict())
    manifest = {
        "total": total,
        "kept": len(rows),
        "rejected": dict(sorted(rejected.items())),
    }
    return rows, manifest
