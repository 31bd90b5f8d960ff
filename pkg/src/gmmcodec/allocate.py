"""Per-image quality selection under a global rate budget.

Each image offers one operating point per quality setting (the lambda of the
setting, its measured quality, and its exact coded size); the allocator
picks exactly one point per image to maximize summed quality without
exceeding the budget. The budget arrives in bits per pixel and converts to
floor(budget_bpp * total_pixels) bits.

The dynamic program buckets option costs as ceil(bits / granularity) cells
against floor(budget_bits / granularity) budget cells. Rounding costs up and
the budget down means any cell-feasible assignment is feasible in exact
bits; at granularity 1 the cells are the bits themselves and the DP matches
exhaustive search exactly.

Tie-breaking is deterministic end to end: qualities are compared in integer
billionths, equal-quality assignments prefer fewer exact bits, and remaining
ties go to the assignment whose per-image lambdas are lexicographically
smallest (images in problem order). Both solvers implement the same rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ResourceLimit

QUALITY_UNIT = 1e-9  # quality compared in integer multiples of this
DEFAULT_GRANULARITY = 1024


@dataclass(frozen=True)
class RdPoint:
    """One operating point: quality and exact cost at one lambda setting."""

    lam: float
    ms_ssim: float
    rate_bits: int
    bpp: float

    def __post_init__(self):
        if not 0.0 <= self.ms_ssim <= 1.0:
            raise InvalidInput(f"ms_ssim {self.ms_ssim} outside [0, 1]")
        if self.rate_bits < 0 or self.bpp < 0.0 or self.lam <= 0.0:
            raise InvalidInput("rate_bits/bpp must be >= 0 and lambda > 0")
        object.__setattr__(self, "rate_bits", int(self.rate_bits))

    @property
    def quality_units(self) -> int:
        return round(self.ms_ssim / QUALITY_UNIT)


@dataclass(frozen=True)
class ImageOptions:
    """One image's identity, pixel count, and operating points.

    Options are sorted by lambda at construction so that per-image input
    order and lambda order coincide for tie-breaking. Every option's
    rate_bits must equal round(bpp * pixels).
    """

    image_id: str
    pixels: int
    options: tuple

    def __post_init__(self):
        if not self.image_id:
            raise InvalidInput("image_id must be non-empty")
        if self.pixels <= 0:
            raise InvalidInput(f"pixel count must be positive, got {self.pixels}")
        opts = tuple(sorted(self.options, key=lambda p: p.lam))
        if not opts:
            raise InvalidInput(f"image {self.image_id!r} has no operating points")
        for p in opts:
            if p.rate_bits != round(p.bpp * self.pixels):
                raise InvalidInput(
                    f"image {self.image_id!r}: rate_bits {p.rate_bits} != "
                    f"round(bpp*pixels) = {round(p.bpp * self.pixels)}"
                )
        object.__setattr__(self, "options", opts)


@dataclass(frozen=True)
class AllocationProblem:
    """Images with their options plus the global bits-per-pixel budget."""

    images: tuple
    budget_bpp: float

    def __post_init__(self):
        if not self.images:
            raise InvalidInput("no images to allocate")
        if self.budget_bpp < 0.0 or not math.isfinite(self.budget_bpp):
            raise InvalidInput(f"bad budget {self.budget_bpp}")
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise InvalidInput(f"duplicate image id {img.image_id!r}")
            seen.add(img.image_id)
        object.__setattr__(self, "images", tuple(self.images))

    @property
    def total_pixels(self) -> int:
        return sum(img.pixels for img in self.images)

    @property
    def budget_bits(self) -> int:
        return math.floor(self.budget_bpp * self.total_pixels)


@dataclass(frozen=True)
class Allocation:
    """Chosen point per image; feasible <=> exact bits within budget."""

    problem: AllocationProblem
    assignment: dict  # image_id -> RdPoint
    feasible: bool

    @property
    def points(self) -> list:
        return [self.assignment[img.image_id] for img in self.problem.images]

    @property
    def objective(self) -> float:
        """Summed quality over images (the quantity being maximized)."""
        return math.fsum(p.ms_ssim for p in self.points)

    @property
    def total_bits(self) -> int:
        return sum(p.rate_bits for p in self.points)


def _cost_cells(bits: int, granularity: int) -> int:
    return -(-bits // granularity)


def _min_rate_assignment(problem: AllocationProblem) -> dict:
    return {
        img.image_id: min(img.options, key=lambda p: p.rate_bits)
        for img in problem.images
    }


def allocate_dp(problem: AllocationProblem,
                granularity_bits: int = DEFAULT_GRANULARITY) -> Allocation:
    """Exact allocation by suffix dynamic programming over budget cells.

    State r is the number of cells still available; table entries hold
    (summed quality units, summed exact bits) for the best completion,
    quality maximized first, bits minimized second. Reconstruction walks
    forward taking the first (lowest-lambda) option that reaches the
    recorded optimum, which yields the lexicographically smallest optimal
    assignment. An infeasible budget returns the minimum-rate assignment
    flagged infeasible.
    """
    if granularity_bits < 1:
        raise InvalidInput(f"granularity must be >= 1, got {granularity_bits}")
    budget_cells = problem.budget_bits // granularity_bits
    # States beyond the cost of taking every image at its dearest option are
    # unreachable plateaus; capping there keeps the table small under huge
    # budgets without changing any decision.
    max_cost = sum(
        max(_cost_cells(p.rate_bits, granularity_bits) for p in img.options)
        for img in problem.images
    )
    cells = min(budget_cells, max_cost)
    n_states = cells + 1
    best_q = np.zeros(n_states, dtype=np.int64)  # empty suffix: free
    best_b = np.zeros(n_states, dtype=np.int64)
    stages = []
    for img in reversed(problem.images):
        next_q, next_b = best_q, best_b
        best_q = np.full(n_states, -1, dtype=np.int64)
        best_b = np.zeros(n_states, dtype=np.int64)
        for point in img.options:
            cost = _cost_cells(point.rate_bits, granularity_bits)
            if cost > cells:
                continue
            tail_q = next_q[: n_states - cost]
            cand_q = np.where(tail_q >= 0, tail_q + point.quality_units, -1)
            cand_b = next_b[: n_states - cost] + point.rate_bits
            cur_q = best_q[cost:]  # views: the updates below write through
            cur_b = best_b[cost:]
            take = (cand_q > cur_q) | ((cand_q == cur_q) & (cand_b < cur_b))
            take &= cand_q >= 0
            cur_q[take] = cand_q[take]
            cur_b[take] = cand_b[take]
        stages.append((next_q, next_b))
    stages.reverse()

    if best_q[cells] < 0:
        return Allocation(problem, _min_rate_assignment(problem), False)

    assignment = {}
    remaining = cells
    need_q = int(best_q[cells])
    need_b = int(best_b[cells])
    for img, (next_q, next_b) in zip(problem.images, stages):
        for point in img.options:
            cost = _cost_cells(point.rate_bits, granularity_bits)
            if cost > remaining:
                continue
            state = remaining - cost
            if (
                next_q[state] >= 0
                and point.quality_units + int(next_q[state]) == need_q
                and point.rate_bits + int(next_b[state]) == need_b
            ):
                assignment[img.image_id] = point
                remaining = state
                need_q -= point.quality_units
                need_b -= point.rate_bits
                break
        else:  # pragma: no cover - the DP table guarantees a match
            raise AssertionError("reconstruction lost the optimum")
    return Allocation(problem, assignment, True)


def allocate_bruteforce(problem: AllocationProblem, max_combos: int = 10**7) -> Allocation:
    """Reference solver: enumerate all assignments against the exact-bit
    budget with the same tie-breaks as allocate_dp at granularity 1."""
    counts = [len(img.options) for img in problem.images]
    total = math.prod(counts)
    if total > max_combos:
        raise ResourceLimit(f"{total} assignments exceed the enumeration cap {max_combos}")
    grids = np.indices(counts).reshape(len(counts), -1)  # C order = lex order
    quality = np.zeros(grids.shape[1], dtype=np.int64)
    bits = np.zeros(grids.shape[1], dtype=np.int64)
    for i, img in enumerate(problem.images):
        quality += np.array([p.quality_units for p in img.options], dtype=np.int64)[grids[i]]
        bits += np.array([p.rate_bits for p in img.options], dtype=np.int64)[grids[i]]
    ok = bits <= problem.budget_bits
    if not ok.any():
        return Allocation(problem, _min_rate_assignment(problem), False)
    quality = np.where(ok, quality, -1)
    top = quality == quality.max()
    bits_masked = np.where(top, bits, np.iinfo(np.int64).max)
    winner = int(np.argmax(bits_masked == bits_masked.min()))  # first = lex smallest
    assignment = {
        img.image_id: img.options[int(grids[i, winner])]
        for i, img in enumerate(problem.images)
    }
    return Allocation(problem, assignment, True)


def summarize(allocation: Allocation):
    """(mean chosen quality, aggregate bpp) over the problem's images.

    The mean uses an exact (compensated) sum; aggregate bpp is total exact
    bits over total pixels.
    """
    points = allocation.points
    mean = math.fsum(p.ms_ssim for p in points) / len(points)
    return mean, allocation.total_bits / allocation.problem.total_pixels


CSV_FIELDS = ("image_id", "pixels", "lambda", "bpp", "ms_ssim")


def read_problem(fp, budget_bpp: float) -> AllocationProblem:
    """Build a problem from CSV rows image_id,pixels,lambda,bpp,ms_ssim.

    rate_bits is derived as round(bpp * pixels). Images keep first-seen
    order; options are re-sorted by lambda.
    """
    reader = csv.DictReader(fp)
    missing = [f for f in CSV_FIELDS if f not in (reader.fieldnames or ())]
    if missing:
        raise InvalidInput(f"rd-point CSV lacks columns: {missing}")
    order: list = []
    pixels: dict = {}
    rows: dict = {}
    for row in reader:
        try:
            image_id = row["image_id"]
            px = int(row["pixels"])
            bpp = float(row["bpp"])
            point = RdPoint(float(row["lambda"]), float(row["ms_ssim"]),
                            round(bpp * px), bpp)
        except (TypeError, ValueError) as exc:
            raise InvalidInput(f"bad rd-point row {row!r}: {exc}") from exc
        if image_id not in rows:
            order.append(image_id)
            rows[image_id] = []
            pixels[image_id] = px
        elif pixels[image_id] != px:
            raise InvalidInput(f"image {image_id!r} has inconsistent pixel counts")
        rows[image_id].append(point)
    if not order:
        raise InvalidInput("rd-point CSV has no rows")
    images = tuple(
        ImageOptions(image_id, pixels[image_id], tuple(rows[image_id]))
        for image_id in order
    )
    return AllocationProblem(images, budget_bpp)


def write_allocation(fp, allocation: Allocation):
    """Write the assignment as CSV rows image_id,lambda plus a trailing
    summary comment line."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(("image_id", "lambda"))
    for img in allocation.problem.images:
        writer.writerow((img.image_id, repr(allocation.assignment[img.image_id].lam)))
    mean, bpp = summarize(allocation)
    fp.write(
        f"# mean_ms_ssim={mean!r} bpp={bpp!r} total_bits={allocation.total_bits} "
        f"feasible={allocation.feasible}\n"
    )
