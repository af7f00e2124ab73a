"""Parsing, validation, and normalization of input-output tables.

One :class:`IOTable` holds a single country-year economy: intermediate flows
``Z`` (millions USD), gross outputs ``Y``, technical coefficients
``A = Z_ij / Y_j``, final demand ``D``, and the final-demand detail by
destination country that scenario construction needs.

Canonical input is a comma-separated long format with a mandatory header::

    record_type,country,year,row_sector,col_sector_or_dest,value

``record_type`` is one of ``FLOW`` (intermediate flow row_sector ->
col_sector), ``FINAL`` (final demand of row_sector, the col field holding the
destination country code), or ``OUTPUT`` (gross output of row_sector, col
field empty).  Values are in millions USD with a decimal point and no
thousands separators; the stream is UTF-8.

Final demand ``D`` is *not* summed from the FINAL rows.  It is taken as the
residual ``D = (I - A) Y`` so that the equilibrium identity
``Y = (I - A)^{-1} D`` holds exactly on real data; the FINAL rows to foreign
destinations are kept verbatim as ``export_demand`` and the domestic
component is the remainder ``D - sum(export_demand, axis=1)``.  A warning is
emitted when a residual demand component is negative; the value is kept.
"""

from __future__ import annotations

import csv
import math
import warnings
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from .errors import (
    InconsistentTable,
    MalformedRow,
    MissingCountryYear,
    NonPositiveScale,
    NonProductiveEconomy,
    ZeroOutputSector,
)
from .sectors import sector_metadata

CANONICAL_HEADER = "record_type,country,year,row_sector,col_sector_or_dest,value"
_HEADER_FIELDS = tuple(CANONICAL_HEADER.split(","))
_RECORD_TYPES = frozenset({"FLOW", "FINAL", "OUTPUT"})

#: Relative tolerance for the accounting identity ||Y - (A Y + D)|| / ||Y||.
IDENTITY_RTOL = 1e-9


class NegativeResidualDemand(UserWarning):
    """Residual demand (I - A) Y has at least one negative component."""


@dataclass(frozen=True)
class SectorId:
    """One production sector of a table."""

    code: str
    index: int
    short_name: str
    group: str

    @classmethod
    def from_code(cls, code: str, index: int) -> "SectorId":
        short_name, group = sector_metadata(code)
        return cls(code=code, index=index, short_name=short_name, group=group)


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance specification of the equilibrium driving noise.

    ``isotropic(eps)`` induces ``nu = eps^2 I``; ``output_proportional(eta)``
    induces ``nu = diag((eta * Y0_i)^2)`` with ``Y0`` the equilibrium output.
    """

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("isotropic", "output_proportional"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not (self.scale > 0.0) or not math.isfinite(self.scale):
            raise NonPositiveScale(
                f"noise scale must be > 0, got {self.scale!r}"
            )

    @classmethod
    def isotropic(cls, eps: float) -> "NoiseSpec":
        return cls(kind="isotropic", scale=float(eps))

    @classmethod
    def output_proportional(cls, eta: float) -> "NoiseSpec":
        return cls(kind="output_proportional", scale=float(eta))


#: Default driving noise: proportional to output, small enough to stay in the
#: linear regime.
DEFAULT_NOISE = NoiseSpec.output_proportional(0.01)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class IOTable:
    """A validated, immutable country-year economy.

    Arrays are read-only; instances are safe to share across workers.
    """

    country: str
    year: int
    sectors: tuple[SectorId, ...]
    flows: np.ndarray            # Z, N x N
    output: np.ndarray           # Y, N
    coefficients: np.ndarray     # A, N x N
    demand: np.ndarray           # D = (I - A) Y, N
    export_demand: np.ndarray    # N x len(destinations), foreign final demand
    destinations: tuple[str, ...]
    domestic_final: np.ndarray   # D - row sums of export_demand

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(s.code for s in self.sectors)

    def sector_index(self, code: str) -> int:
        for s in self.sectors:
            if s.code == code:
                return s.index
        raise KeyError(f"sector {code!r} not in table {self.country}/{self.year}")

    def destination_index(self, dest: str) -> int:
        try:
            return self.destinations.index(dest)
        except ValueError:
            raise KeyError(
                f"destination {dest!r} not in table {self.country}/{self.year}"
            ) from None

    def equals(self, other: "IOTable") -> bool:
        """Field-by-field equality (used by round-trip tests)."""
        return (
            self.country == other.country
            and self.year == other.year
            and self.codes == other.codes
            and self.destinations == other.destinations
            and np.array_equal(self.flows, other.flows)
            and np.array_equal(self.output, other.output)
            and np.array_equal(self.export_demand, other.export_demand)
        )

    # -- construction -------------------------------------------------------

    @classmethod
    def from_flows(
        cls,
        country: str,
        year: int,
        codes: Sequence[str],
        flows: np.ndarray,
        output: np.ndarray,
        final_demand: np.ndarray | None = None,
        final_destinations: Sequence[str] = (),
    ) -> "IOTable":
        """Build and validate a table from raw flows and outputs.

        ``final_demand`` columns follow ``final_destinations`` (which may
        include the home country; that column only pins down which
        destinations exist -- the domestic component is always recomputed as
        the residual).
        """
        codes = [str(c) for c in codes]
        n = len(codes)
        if n < 1:
            raise InconsistentTable("table has no sectors")
        if len(set(codes)) != n:
            raise InconsistentTable(f"duplicate sector codes in {country}/{year}")

        flows = np.asarray(flows, dtype=float)
        output = np.asarray(output, dtype=float)
        if flows.shape != (n, n):
            raise InconsistentTable(
                f"flow matrix shape {flows.shape} != ({n}, {n})"
            )
        if output.shape != (n,):
            raise InconsistentTable(f"output vector shape {output.shape} != ({n},)")
        if not np.all(np.isfinite(flows)) or not np.all(np.isfinite(output)):
            raise InconsistentTable("non-finite flow or output value")
        if np.any(output < 0.0):
            bad = codes[int(np.argmax(output < 0.0))]
            raise InconsistentTable(f"negative gross output for sector {bad}")
        if np.any(flows < 0.0):
            i, j = np.unravel_index(int(np.argmin(flows)), flows.shape)
            raise InconsistentTable(
                f"negative flow {flows[i, j]:.6g} from {codes[i]} to {codes[j]}"
            )

        zero_out = output == 0.0
        if np.any(zero_out):
            col_mass = np.abs(flows).sum(axis=0)
            offenders = zero_out & (col_mass > 0.0)
            if np.any(offenders):
                bad = codes[int(np.argmax(offenders))]
                raise ZeroOutputSector(
                    f"sector {bad} has zero output but nonzero input flows"
                )

        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(output[None, :] > 0.0, flows / output[None, :], 0.0)

        radius = spectral_radius(coeff)
        if radius >= 1.0:
            raise NonProductiveEconomy(radius, detail=f"{country}/{year}")

        demand = output - coeff @ output
        if np.any(demand < 0.0):
            worst = int(np.argmin(demand))
            warnings.warn(
                f"{country}/{year}: residual demand negative for sector "
                f"{codes[worst]} ({demand[worst]:.6g}); kept as-is",
                NegativeResidualDemand,
                stacklevel=2,
            )

        dests = [str(d) for d in final_destinations]
        if final_demand is None:
            final_demand = np.zeros((n, len(dests)))
        final_demand = np.asarray(final_demand, dtype=float)
        if final_demand.shape != (n, len(dests)):
            raise InconsistentTable(
                f"final demand shape {final_demand.shape} != ({n}, {len(dests)})"
            )
        if len(set(dests)) != len(dests):
            raise InconsistentTable("duplicate destination codes")

        foreign = [k for k, d in enumerate(dests) if d != country]
        order = sorted(foreign, key=lambda k: dests[k])
        export = final_demand[:, order] if order else np.zeros((n, 0))
        destinations = tuple(dests[k] for k in order)
        domestic = demand - export.sum(axis=1)

        sectors = tuple(SectorId.from_code(c, i) for i, c in enumerate(codes))
        return cls(
            country=str(country),
            year=int(year),
            sectors=sectors,
            flows=_readonly(flows),
            output=_readonly(output),
            coefficients=_readonly(coeff),
            demand=_readonly(demand),
            export_demand=_readonly(export),
            destinations=destinations,
            domestic_final=_readonly(domestic),
        )

    @classmethod
    def from_coefficients(
        cls,
        country: str,
        year: int,
        codes: Sequence[str],
        coefficients: np.ndarray,
        demand: np.ndarray,
    ) -> "IOTable":
        """Build a synthetic table from (A, D); Y solves (I - A) Y = D."""
        coefficients = np.asarray(coefficients, dtype=float)
        demand = np.asarray(demand, dtype=float)
        n = coefficients.shape[0]
        eye = np.eye(n)
        output = np.linalg.solve(eye - coefficients, demand)
        flows = coefficients * output[None, :]
        return cls.from_flows(country, year, codes, flows, output)


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def noise_covariance(spec: NoiseSpec, table: IOTable) -> np.ndarray:
    """Covariance matrix nu induced by a noise specification.

    ``isotropic(eps)`` gives ``eps^2 I``; ``output_proportional(eta)`` gives
    ``diag((eta Y0_i)^2)``.  Sectors with zero equilibrium output get a zero
    diagonal entry under the proportional rule, which makes nu only positive
    semidefinite; a warning flags that case because Monte Carlo estimators
    need a nonsingular stationary covariance.
    """
    n = table.n_sectors
    if spec.kind == "isotropic":
        return spec.scale**2 * np.eye(n)
    diag = (spec.scale * table.output) ** 2
    if np.any(diag == 0.0):
        warnings.warn(
            f"{table.country}/{table.year}: zero-output sector makes the "
            "proportional noise covariance singular",
            UserWarning,
            stacklevel=2,
        )
    return np.diag(diag)


# ---------------------------------------------------------------------------
# canonical long-format scanning
# ---------------------------------------------------------------------------

def _open_source(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def _scan_rows(stream: TextIO) -> Iterator[tuple[int, str, str, int, str, str, float]]:
    """Yield validated rows as (lineno, type, country, year, row, col, value)."""
    reader = csv.reader(stream)
    header = None
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if header is None:
            header = tuple(f.strip() for f in row)
            if header != _HEADER_FIELDS:
                raise MalformedRow(
                    lineno, f"expected header {CANONICAL_HEADER!r}"
                )
            continue
        if len(row) != 6:
            raise MalformedRow(lineno, f"expected 6 fields, got {len(row)}")
        rtype, country, year_s, rsec, col, value_s = (f.strip() for f in row)
        if rtype not in _RECORD_TYPES:
            raise MalformedRow(lineno, f"unknown record_type {rtype!r}")
        if not country:
            raise MalformedRow(lineno, "empty country field")
        if not rsec:
            raise MalformedRow(lineno, "empty row_sector field")
        try:
            year = int(year_s)
        except ValueError:
            raise MalformedRow(lineno, f"year {year_s!r} is not an integer") from None
        try:
            value = float(value_s)
        except ValueError:
            raise MalformedRow(lineno, f"value {value_s!r} is not a number") from None
        if not math.isfinite(value):
            raise MalformedRow(lineno, f"non-finite value {value_s!r}")
        if rtype == "OUTPUT":
            if col:
                raise MalformedRow(lineno, "OUTPUT rows must leave the col field empty")
        elif not col:
            raise MalformedRow(lineno, f"{rtype} rows need a col_sector_or_dest field")
        yield lineno, rtype, country, year, rsec, col, value
    if header is None:
        raise MalformedRow(1, "empty stream (header row required)")


class _TableAccumulator:
    """Collects the rows of one (country, year) cell and assembles arrays.

    Rows whose sector codes are already known (the common case: OUTPUT rows
    lead the table) are resolved immediately into compact index/value
    buffers, so a world-scale panel parses in tens of megabytes.  Rows that
    arrive before their OUTPUT row are parked and resolved at build time.
    """

    def __init__(self, country: str, year: int):
        self.country = country
        self.year = year
        self.codes: list[str] = []
        self.code_index: dict[str, int] = {}
        self.dest_index: dict[str, int] = {}
        self.outputs: list[float] = []
        self.flow_cells = (array("i"), array("i"), array("d"))
        self.final_cells = (array("i"), array("i"), array("d"))
        self.pending: list[tuple[int, str, str, str, float]] = []

    def add(self, lineno: int, rtype: str, rsec: str, col: str, value: float):
        if rtype == "OUTPUT":
            if rsec in self.code_index:
                raise InconsistentTable(
                    f"line {lineno}: duplicate OUTPUT row for sector {rsec} "
                    f"in {self.country}/{self.year}"
                )
            self.code_index[rsec] = len(self.codes)
            self.codes.append(rsec)
            self.outputs.append(value)
            return
        i = self.code_index.get(rsec)
        if rtype == "FLOW":
            j = self.code_index.get(col)
            if i is None or j is None:
                self.pending.append((lineno, rtype, rsec, col, value))
                return
            cells = self.flow_cells
        else:
            j = self.dest_index.setdefault(col, len(self.dest_index))
            if i is None:
                self.pending.append((lineno, rtype, rsec, col, value))
                return
            cells = self.final_cells
        cells[0].append(i)
        cells[1].append(j)
        cells[2].append(value)

    def _require(self, lineno: int, code: str) -> int:
        idx = self.code_index.get(code)
        if idx is None:
            raise InconsistentTable(
                f"line {lineno}: sector {code!r} has no OUTPUT row "
                f"in {self.country}/{self.year}"
            )
        return idx

    def build(self, clip_negative_flows: bool = False) -> IOTable:
        n = len(self.codes)
        if n == 0:
            raise MissingCountryYear(
                f"no OUTPUT rows for {self.country}/{self.year}"
            )
        for lineno, rtype, rsec, col, value in self.pending:
            i = self._require(lineno, rsec)
            if rtype == "FLOW":
                j = self._require(lineno, col)
                cells = self.flow_cells
            else:
                j = self.dest_index[col]
                cells = self.final_cells
            cells[0].append(i)
            cells[1].append(j)
            cells[2].append(value)
        self.pending.clear()

        output = np.asarray(self.outputs)
        flows = np.zeros((n, n))
        fi, fj, fv = (np.frombuffer(c, dtype=t) for c, t in
                      zip(self.flow_cells, (np.int32, np.int32, np.float64)))
        np.add.at(flows, (fi, fj), fv)
        if clip_negative_flows:
            np.clip(flows, 0.0, None, out=flows)

        dests = list(self.dest_index)
        final = np.zeros((n, len(dests)))
        gi, gj, gv = (np.frombuffer(c, dtype=t) for c, t in
                      zip(self.final_cells, (np.int32, np.int32, np.float64)))
        np.add.at(final, (gi, gj), gv)
        return IOTable.from_flows(
            self.country,
            self.year,
            self.codes,
            flows,
            output,
            final_demand=final,
            final_destinations=dests,
        )


def parse_io_table(
    source,
    country: str,
    year: int,
    clip_negative_flows: bool = False,
) -> IOTable:
    """Parse one (country, year) economy from a canonical long-format stream.

    ``source`` may be a path or an open text stream.  Raises
    :class:`MissingCountryYear` when the requested cell has no rows, and the
    usual diagnostics (:class:`MalformedRow`, :class:`NonProductiveEconomy`,
    :class:`ZeroOutputSector`, ...) when validation fails.
    """
    stream, close = _open_source(source)
    acc = _TableAccumulator(str(country), int(year))
    seen = False
    try:
        for lineno, rtype, c, y, rsec, col, value in _scan_rows(stream):
            if c != acc.country or y != acc.year:
                continue
            seen = True
            acc.add(lineno, rtype, rsec, col, value)
    finally:
        if close:
            stream.close()
    if not seen:
        raise MissingCountryYear(f"no rows for {country}/{year}")
    return acc.build(clip_negative_flows=clip_negative_flows)


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------

class Panel:
    """An immutable collection of IOTables keyed by (country, year)."""

    def __init__(self, tables: Iterable[IOTable]):
        self._tables: dict[tuple[str, int], IOTable] = {}
        for t in tables:
            key = (t.country, t.year)
            if key in self._tables:
                raise InconsistentTable(f"duplicate table for {key}")
            self._tables[key] = t

    def __len__(self) -> int:
        return len(self._tables)

    def __iter__(self) -> Iterator[IOTable]:
        for key in sorted(self._tables):
            yield self._tables[key]

    def __contains__(self, key: tuple[str, int]) -> bool:
        return tuple(key) in self._tables

    def get(self, country: str, year: int) -> IOTable:
        try:
            return self._tables[(country, int(year))]
        except KeyError:
            raise MissingCountryYear(f"no table for {country}/{year}") from None

    def countries(self) -> list[str]:
        return sorted({c for c, _ in self._tables})

    def years(self, country: str | None = None) -> list[int]:
        if country is None:
            return sorted({y for _, y in self._tables})
        return sorted(y for c, y in self._tables if c == country)

    def codes(self) -> tuple[str, ...]:
        """Common sector code tuple, validated across all tables."""
        tables = iter(self)
        first = next(tables)
        for t in tables:
            if t.codes != first.codes:
                raise InconsistentTable(
                    f"sector lists differ between {first.country}/{first.year} "
                    f"and {t.country}/{t.year}"
                )
        return first.codes


def load_panel(
    path,
    countries: Sequence[str] | None = None,
    years: Sequence[int] | None = None,
    clip_negative_flows: bool = False,
) -> Panel:
    """Parse every (or the selected) country-year table from a file."""
    want_c = set(countries) if countries is not None else None
    want_y = {int(y) for y in years} if years is not None else None
    accs: dict[tuple[str, int], _TableAccumulator] = {}
    stream, close = _open_source(path)
    try:
        for lineno, rtype, c, y, rsec, col, value in _scan_rows(stream):
            if want_c is not None and c not in want_c:
                continue
            if want_y is not None and y not in want_y:
                continue
            acc = accs.get((c, y))
            if acc is None:
                acc = accs[(c, y)] = _TableAccumulator(c, y)
            acc.add(lineno, rtype, rsec, col, value)
    finally:
        if close:
            stream.close()
    if not accs:
        raise MissingCountryYear("no matching rows in stream")
    return Panel(
        accs[key].build(clip_negative_flows=clip_negative_flows)
        for key in sorted(accs)
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_io_table(table: IOTable, stream: TextIO, header: bool = True) -> None:
    """Serialize a table to canonical long format.

    OUTPUT rows come first (they define the sector order), then nonzero FLOW
    cells, then every FINAL cell: domestic residual under the home country
    code plus the full export detail.  Values use shortest exact ``repr`` so
    parse -> write -> parse is the identity.
    """
    if header:
        stream.write(CANONICAL_HEADER + "\n")
    c, y = table.country, table.year
    codes = table.codes
    for i, code in enumerate(codes):
        stream.write(f"OUTPUT,{c},{y},{code},,{_fmt(table.output[i])}\n")
    for i, row_code in enumerate(codes):
        for j, col_code in enumerate(codes):
            v = table.flows[i, j]
            if v != 0.0:
                stream.write(f"FLOW,{c},{y},{row_code},{col_code},{_fmt(v)}\n")
    for i, code in enumerate(codes):
        stream.write(f"FINAL,{c},{y},{code},{c},{_fmt(table.domestic_final[i])}\n")
        for k, dest in enumerate(table.destinations):
            stream.write(
                f"FINAL,{c},{y},{code},{dest},{_fmt(table.export_demand[i, k])}\n"
            )


def write_panel(panel: Panel, stream: TextIO) -> None:
    stream.write(CANONICAL_HEADER + "\n")
    for table in panel:
        write_io_table(table, stream, header=False)
