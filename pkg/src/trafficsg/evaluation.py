"""Per-type, per-hierarchy QA accuracy tables.

Accuracies are rounded to two decimals half-up; the Average row pools
correct and total counts across types rather than averaging accuracies.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping

from .errors import DuplicatePrediction, UnknownQuestion
from .ingest import HIERARCHIES, QUESTION_TYPES, QARecord

log = logging.getLogger(__name__)

_TRAILING_PUNCT = ".,;:!?"
_LETTER_PREFIX = re.compile(r"^\(?([a-d])\s*[\).:]\s*(.*)$")


def normalize_answer(text: str) -> str:
    return str(text).strip().casefold().rstrip(_TRAILING_PUNCT).strip()


def canonical_answer(text: str, options: Mapping[str, str] | None) -> str:
    """Normalized answer; for option questions, mapped to its option letter when possible."""
    norm = normalize_answer(text)
    if not options:
        return norm
    letters = {k.casefold(): normalize_answer(v) for k, v in options.items()}
    if norm in letters:
        return norm
    for letter, option_text in letters.items():
        if norm == option_text:
            return letter
    m = _LETTER_PREFIX.match(norm)
    if m and m.group(1) in letters and normalize_answer(m.group(2)) == letters[m.group(1)]:
        return m.group(1)
    return norm


def round_accuracy(correct: int, total: int) -> Decimal:
    if total == 0:
        return Decimal("0.00")
    return (Decimal(correct) / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass
class EvalRecord:
    question_id: str
    type: str
    hierarchy: str
    predicted: str | None
    gold: str
    correct: bool
    options: dict | None = None
    termination: str | None = None


@dataclass
class EvalTable:
    cells: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def counts(self, qtype: str | None = None, hierarchy: str | None = None) -> tuple[int, int]:
        correct = total = 0
        for (t, h), (c, n) in self.cells.items():
            if (qtype is None or t == qtype) and (hierarchy is None or h == hierarchy):
                correct += c
                total += n
        return correct, total

    def accuracy(self, qtype: str | None = None, hierarchy: str | None = None) -> Decimal:
        return round_accuracy(*self.counts(qtype, hierarchy))

    def rows(self) -> list[dict]:
        out = []
        for label, qtype in [(t, t) for t in QUESTION_TYPES] + [("Average", None)]:
            row = {"type": label}
            for h in HIERARCHIES:
                c, n = self.counts(qtype, h)
                row[f"{h}_num"] = f"{c}/{n}"
                row[f"{h}_acc"] = str(round_accuracy(c, n))
            c, n = self.counts(qtype)
            row["all_num"] = f"{c}/{n}"
            row["avg_acc"] = str(round_accuracy(c, n))
            out.append(row)
        return out

    def render(self) -> str:
        header = ["Type", "H0 Num.", "H0 Acc", "H1 Num.", "H1 Acc", "All Num.", "Avg. Acc"]
        body = [[r["type"], r["H0_num"], r["H0_acc"], r["H1_num"], r["H1_acc"], r["all_num"], r["avg_acc"]]
                for r in self.rows()]
        widths = [max(len(str(row[i])) for row in [header] + body) for i in range(len(header))]
        fmt = lambda row: "  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip()  # noqa: E731
        rule = "-" * len(fmt(header))
        lines = [fmt(header), rule] + [fmt(r) for r in body[:-1]] + [rule, fmt(body[-1])]
        return "\n".join(lines) + "\n"


def score(qa: QARecord, predicted: str | None) -> bool:
    if predicted is None:
        return False
    return canonical_answer(predicted, qa.options) == canonical_answer(qa.answer, qa.options)


def evaluate(qa_records: Iterable[QARecord], predictions, terminations: Mapping | None = None
             ) -> tuple[EvalTable, list[EvalRecord]]:
    """Score predictions against gold answers.

    ``predictions`` is a mapping or an iterable of ``(question_id, answer)``
    pairs. Questions without a prediction count as wrong and add a warning.
    """
    qa_records = list(qa_records)
    by_id = {q.question_id: q for q in qa_records}
    pairs = predictions.items() if isinstance(predictions, Mapping) else predictions
    preds: dict[str, str] = {}
    for qid, answer in pairs:
        qid = str(qid)
        if qid in preds:
            raise DuplicatePrediction(f"question {qid!r} predicted more than once")
        if qid not in by_id:
            raise UnknownQuestion(f"prediction for unknown question {qid!r}")
        preds[qid] = answer

    table = EvalTable({(t, h): [0, 0] for t in QUESTION_TYPES for h in HIERARCHIES})
    records = []
    for q in qa_records:
        predicted = preds.get(q.question_id)
        if predicted is None:
            msg = f"no prediction for question {q.question_id!r}; counted incorrect"
            log.warning(msg)
            table.warnings.append(msg)
        ok = score(q, predicted)
        cell = table.cells[(q.type, q.hierarchy)]
        cell[0] += int(ok)
        cell[1] += 1
        records.append(EvalRecord(q.question_id, q.type, q.hierarchy, predicted, q.answer, ok, q.options,
                                  (terminations or {}).get(q.question_id)))
    return table, records


def write_results(records: Iterable[EvalRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True, ensure_ascii=False) + "\n")


def load_results(path) -> tuple[list[QARecord], dict[str, str]]:
    """Recover QA records and predictions from a results file for offline re-scoring."""
    qa, preds = [], {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            qa.append(QARecord(r["question_id"], r["type"], r["hierarchy"], "(from results)",
                               r["gold"], r.get("options")))
            if r.get("predicted") is not None:
                preds[r["question_id"]] = r["predicted"]
    return qa, preds


def format_question(qa: QARecord) -> str:
    if not qa.options:
        return qa.question
    opts = " ".join(f"({k}) {v}" for k, v in sorted(qa.options.items()))
    return f"{qa.question} Options: {opts}"
