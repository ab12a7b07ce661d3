"""Expense ledgers to normalised (X, mask) matrices.

Rows of the assembled matrix are month indices, columns are projects.
Cells are either observed (recorded spend, trailing zeros after completion,
zeros after a known targeted end date) or missing (to be forecast).
"""

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .solver import BudgetError

__all__ = [
    "DataError",
    "ExpenseRecord",
    "ProjectMeta",
    "ExpenseMatrix",
    "month_index",
    "parse_month",
    "format_month",
    "assemble",
    "residual_fraction",
    "read_expenses_csv",
    "read_projects_csv",
    "write_expenses_csv",
    "write_projects_csv",
]

SUM_TOL = 1e-6


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class OverBudgetError(DataError, BudgetError):
    pass


@dataclass(frozen=True)
class ExpenseRecord:
    project_id: str
    month_index: int
    expense: float

    def __post_init__(self):
        if self.month_index < 0:
            raise DataError("negative month index for project %r" % self.project_id)
        if not self.expense >= 0:
            raise DataError("negative or NaN expense for project %r" % self.project_id)


@dataclass(frozen=True)
class ProjectMeta:
    project_id: str
    budget: float
    ted: Optional[int] = None
    status: str = "ongoing"

    def __post_init__(self):
        if not self.budget > 0:
            raise DataError("budget must be positive for project %r" % self.project_id)
        if self.ted is not None and self.ted < 0:
            raise DataError("negative TED for project %r" % self.project_id)
        if self.status not in ("completed", "ongoing"):
            raise DataError(
                "status must be 'completed' or 'ongoing', got %r" % self.status
            )


@dataclass(frozen=True)
class ExpenseMatrix:
    """Budget-normalised expense matrix.

    ``heldout`` and ``test_mask`` carry the records excluded by a cutoff
    (absolute expenses), kept aside for evaluation.
    """

    X: np.ndarray
    mask: np.ndarray
    budgets: np.ndarray
    project_ids: List[str]
    horizon: int
    completed_count: int
    heldout: np.ndarray = field(default=None, repr=False)
    test_mask: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self):
        return self.X.shape

    def observed_expenses(self):
        """Absolute spend on observed cells, zero elsewhere."""
        return np.where(self.mask, self.X, 0.0) * self.budgets[None, :]


def month_index(year, month, epoch_year, epoch_month):
    """Months elapsed between the epoch and (year, month)."""
    for m in (month, epoch_month):
        if not 1 <= m <= 12:
            raise DataError("month must be in 1..12, got %r" % m)
    idx = (year - epoch_year) * 12 + (month - epoch_month)
    if idx < 0:
        raise DataError(
            "date %04d-%02d precedes epoch %04d-%02d" % (year, month, epoch_year, epoch_month)
        )
    return idx


def parse_month(text):
    """``'YYYY-MM'`` -> ``(year, month)``."""
    try:
        year, month = str(text).strip().split("-")[:2]
        year, month = int(year), int(month)
    except ValueError:
        raise DataError("bad date %r, expected YYYY-MM" % text) from None
    if not 1 <= month <= 12:
        raise DataError("bad date %r, month out of range" % text)
    return year, month


def format_month(year, month, offset=0):
    total = year * 12 + (month - 1) + offset
    return "%04d-%02d" % (total // 12, total % 12 + 1)


def _column_mask(rows, expenses, meta, M):
    """Observed flags and values for one project's column."""
    if meta.ted is not None and meta.ted >= M:
        raise DataError(
            "TED %d beyond horizon %d for project %r" % (meta.ted, M, meta.project_id)
        )
    values = np.zeros(M)
    observed = np.zeros(M, dtype=bool)
    for r, y in zip(rows, expenses):
        values[r] += y
        observed[r] = True

    if meta.status == "completed":
        # a finished ledger: every month without a record is a zero
        observed[:] = True
    elif rows:
        last = max(rows)
        if meta.ted is not None:
            observed[max(meta.ted, last) + 1:] = True
    elif meta.ted is not None:
        observed[meta.ted + 1:] = True
    return values, observed


def assemble(
    records: Iterable[ExpenseRecord],
    meta: Sequence[ProjectMeta],
    horizon: Optional[int] = None,
    cutoff=None,
    align: str = "none",
):
    """Build an :class:`ExpenseMatrix` from ledger records.

    Parameters
    ----------
    records : iterable of ExpenseRecord
        Duplicate (project, month) rows are summed.
    meta : sequence of ProjectMeta
        Column order of the result.
    horizon : int, optional
        Number of rows ``M``.  Defaults to one past the largest row index
        among the records.
    cutoff : int, optional
        Records with ``month_index >= cutoff`` are withheld from the
        observations and returned in ``heldout`` / ``test_mask``.
    align : {"none", "start"}
        ``"none"`` uses month indices as rows.  ``"start"`` re-bases every
        project so that its first ledger month (held-out records included,
        i.e. the project start date) is row 0; the cutoff is still compared
        against the raw month index and TEDs are read as re-based rows.

    Notes
    -----
    Completed projects are fully observed (months without a record are
    zeros) and must sum to their budget.  An ongoing project is observed at
    its recorded months and at every month strictly after its TED; all other
    months, including gaps and months before the first record, are missing.
    A completed project that has records at or after the cutoff is treated
    as ongoing.
    """
    if align not in ("none", "start"):
        raise DataError("align must be 'none' or 'start'")
    meta = list(meta)
    by_id = OrderedDict()
    for p in meta:
        if p.project_id in by_id:
            raise DataError("duplicate project %r in metadata" % p.project_id)
        by_id[p.project_id] = p

    ledgers = {pid: {} for pid in by_id}
    for rec in records:
        if rec.project_id not in ledgers:
            raise DataError("unknown project_id %r" % rec.project_id)
        ledgers[rec.project_id].setdefault(rec.month_index, []).append(rec.expense)
    # fsum is exactly rounded, so record order cannot change the result
    ledgers = {
        pid: {k: math.fsum(v) for k, v in book.items()} for pid, book in ledgers.items()
    }

    starts = {}
    for pid, book in ledgers.items():
        starts[pid] = min(book) if (align == "start" and book) else 0

    max_row = -1
    for pid, book in ledgers.items():
        if book:
            max_row = max(max_row, max(book) - starts[pid])
    if horizon is None:
        if max_row < 0:
            raise DataError("no expense records")
        horizon = max_row + 1
    if horizon < 1:
        raise DataError("horizon must be >= 1")
    if max_row >= horizon:
        raise DataError("record at row %d beyond horizon %d" % (max_row, horizon))

    M, N = horizon, len(meta)
    X = np.zeros((M, N))
    mask = np.zeros((M, N), dtype=bool)
    heldout = np.zeros((M, N))
    test_mask = np.zeros((M, N), dtype=bool)
    budgets = np.array([p.budget for p in meta], dtype=float)
    completed = 0

    for n, (pid, p) in enumerate(by_id.items()):
        book = ledgers[pid]
        train = {k: v for k, v in book.items() if cutoff is None or k < cutoff}
        test = {k: v for k, v in book.items() if cutoff is not None and k >= cutoff}
        if p.status == "completed" and test:
            p = ProjectMeta(p.project_id, p.budget, p.ted, "ongoing")
        if p.status == "completed":
            completed += 1

        rows = sorted(k - starts[pid] for k in train)
        exps = [train[k + starts[pid]] for k in rows]
        values, observed = _column_mask(rows, exps, p, M)
        X[:, n] = np.where(observed, values / p.budget, 0.0)
        mask[:, n] = observed

        for k, y in test.items():
            heldout[k - starts[pid], n] += y
            test_mask[k - starts[pid], n] = True

        total = X[:, n].sum()
        if total > 1 + SUM_TOL:
            raise OverBudgetError(
                "project %r is over budget: observed spend is %.6g of budget"
                % (pid, total)
            )
        if p.status == "completed" and abs(total - 1) > SUM_TOL:
            raise DataError(
                "completed project %r spends %.6g of its budget, expected 1" % (pid, total)
            )

    test_mask &= ~mask
    heldout = np.where(test_mask, heldout, 0.0)
    return ExpenseMatrix(
        X=X,
        mask=mask,
        budgets=budgets,
        project_ids=list(by_id),
        horizon=M,
        completed_count=completed,
        heldout=heldout,
        test_mask=test_mask,
    )


def residual_fraction(matrix, n):
    """Unspent budget fraction of column ``n``."""
    col = np.where(matrix.mask[:, n], matrix.X[:, n], 0.0)
    r = 1.0 - col.sum()
    if r < -SUM_TOL:
        raise OverBudgetError(
            "project %r is over budget (residual %.3g)" % (matrix.project_ids[n], r)
        )
    return max(r, 0.0)


# -- CSV formats -----------------------------------------------------------


class Ledger(list):
    """List of ExpenseRecord with the calendar epoch used to index it (if any)."""

    epoch = None


def _reader(source):
    if hasattr(source, "read"):
        return list(csv.DictReader(source))
    with open(source, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_expenses_csv(source):
    """Read ``project_id,date,expense`` or ``project_id,month_index,expense``.

    Dates (``YYYY-MM``) become months since the earliest date in the file;
    that epoch is stored on the returned ledger as ``ledger.epoch``.
    """
    rows = _reader(source)
    ledger = Ledger()
    if not rows:
        return ledger
    header = set(rows[0])
    if not {"project_id", "expense"} <= header:
        raise DataError("expenses CSV needs project_id and expense columns")
    if "date" in header:
        dates = [parse_month(r["date"]) for r in rows]
        epoch = min(dates)
        ledger.epoch = epoch
        idx = [month_index(y, m, *epoch) for y, m in dates]
    elif "month_index" in header:
        try:
            idx = [int(r["month_index"]) for r in rows]
        except ValueError as exc:
            raise DataError("bad month_index: %s" % exc) from None
    else:
        raise DataError("expenses CSV needs a date or month_index column")
    for r, k in zip(rows, idx):
        try:
            y = float(r["expense"])
        except ValueError:
            raise DataError("bad expense %r" % r["expense"]) from None
        ledger.append(ExpenseRecord(r["project_id"], k, y))
    return ledger


def read_projects_csv(source):
    """Read ``project_id,budget,ted,status`` (``ted`` blank when unknown)."""
    rows = _reader(source)
    out = []
    for r in rows:
        try:
            budget = float(r["budget"])
            ted = r.get("ted", "") or ""
            ted = int(ted) if ted.strip() else None
        except (KeyError, ValueError) as exc:
            raise DataError("bad projects row %r: %s" % (r, exc)) from None
        status = (r.get("status") or "ongoing").strip()
        out.append(ProjectMeta(r["project_id"], budget, ted, status))
    return out


def write_expenses_csv(fh, records, epoch=None):
    """Write records; with an ``epoch`` the month column is ``date``."""
    w = csv.writer(fh, lineterminator="\n")
    if epoch is None:
        w.writerow(["project_id", "month_index", "expense"])
        for r in records:
            w.writerow([r.project_id, r.month_index, repr(float(r.expense))])
    else:
        w.writerow(["project_id", "date", "expense"])
        for r in records:
            w.writerow([r.project_id, format_month(*epoch, r.month_index), repr(float(r.expense))])


def write_projects_csv(fh, meta):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["project_id", "budget", "ted", "status"])
    for p in meta:
        w.writerow([p.project_id, repr(float(p.budget)), "" if p.ted is None else p.ted, p.status])
