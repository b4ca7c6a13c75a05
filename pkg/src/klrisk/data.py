"""Observation records and CSV ingestion.

An :class:`Observation` is either an exact event time (``event=True``) or a
time at which follow-up stopped without the event (right censoring). This pair
``(time, event)`` is the usual ``(X~, delta)`` encoding of what was observed.

File formats (comma separated, ``.`` decimal mark, UTF-8, header first, no
quoting)::

    time,status[,z1,...,zk]      status 1 = event, 0 = censored
    subject,y                     rows of a subject must be contiguous
"""

from __future__ import annotations

import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyDataError, FormatError


@dataclass(frozen=True)
class Observation:
    time: float
    event: bool = True
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        t = float(self.time)
        if not np.isfinite(t):
            raise DomainError(f"non-finite observation time {self.time!r}")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", bool(self.event))
        object.__setattr__(self, "covariates", tuple(float(z) for z in self.covariates))

    @classmethod
    def exact(cls, x, covariates=()):
        return cls(x, True, tuple(covariates))

    @classmethod
    def censored(cls, c, covariates=()):
        return cls(c, False, tuple(covariates))

    @property
    def is_censored(self) -> bool:
        return not self.event


@dataclass(frozen=True)
class Dataset:
    """An iid sample of exact or right-censored observations."""

    observations: tuple[Observation, ...]
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _events: np.ndarray = field(init=False, repr=False, compare=False)
    _z: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        obs = tuple(self.observations)
        if not obs:
            raise EmptyDataError("a dataset needs at least one observation")
        dims = {len(o.covariates) for o in obs}
        if len(dims) != 1:
            raise DomainError(f"inconsistent covariate dimensions {sorted(dims)}")
        object.__setattr__(self, "observations", obs)
        times = np.array([o.time for o in obs])
        events = np.array([o.event for o in obs], dtype=bool)
        z = np.array([o.covariates for o in obs], dtype=float).reshape(len(obs), dims.pop())
        for arr in (times, events, z):
            arr.setflags(write=False)
        object.__setattr__(self, "_times", times)
        object.__setattr__(self, "_events", events)
        object.__setattr__(self, "_z", z)

    @classmethod
    def from_arrays(cls, times, events=None, covariates=None) -> Dataset:
        times = np.asarray(times, dtype=float).ravel()
        events = np.ones(times.size, bool) if events is None else np.asarray(events, bool).ravel()
        if events.size != times.size:
            raise DomainError("times and events differ in length")
        if covariates is None:
            zs = [()] * times.size
        else:
            z = np.asarray(covariates, dtype=float).reshape(times.size, -1)
            zs = [tuple(row) for row in z]
        return cls(tuple(Observation(t, e, c) for t, e, c in zip(times, events, zs)))

    @classmethod
    def censor_at(cls, x, c: float | None) -> Dataset:
        """Apply fixed-time right censoring at ``c`` to raw draws ``x``."""
        x = np.asarray(x, dtype=float)
        if c is None:
            return cls.from_arrays(x)
        return cls.from_arrays(np.minimum(x, c), x <= c)

    def __len__(self):
        return len(self.observations)

    def __getitem__(self, idx):
        return self.observations[idx]

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def events(self) -> np.ndarray:
        return self._events

    @property
    def covariates(self) -> np.ndarray:
        return self._z

    @property
    def n_covariates(self) -> int:
        return self._z.shape[1]

    @property
    def n_events(self) -> int:
        return int(self._events.sum())

    def subset(self, idx) -> Dataset:
        return Dataset(tuple(self.observations[i] for i in np.asarray(idx).ravel()))


@dataclass(frozen=True)
class GroupedDataset:
    """Repeated outcomes per subject, for random-intercept models."""

    subjects: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self):
        subs = tuple((str(sid), tuple(float(v) for v in ys)) for sid, ys in self.subjects)
        if not subs:
            raise EmptyDataError("no subjects")
        for sid, ys in subs:
            if len(ys) < 1:
                raise DomainError(f"subject {sid} has no outcomes")
            if not all(np.isfinite(ys)):
                raise DomainError(f"subject {sid} has non-finite outcomes")
        object.__setattr__(self, "subjects", subs)

    @classmethod
    def from_lists(cls, outcomes: Iterable[Sequence[float]], ids=None) -> GroupedDataset:
        outcomes = [tuple(y) for y in outcomes]
        ids = range(1, len(outcomes) + 1) if ids is None else ids
        return cls(tuple(zip((str(i) for i in ids), outcomes)))

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def outcomes(self) -> list[np.ndarray]:
        return [np.asarray(ys) for _, ys in self.subjects]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(ys) for _, ys in self.subjects])

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Outcomes as a zero-padded (subjects x max n_i) array plus a mask."""
        sizes = self.sizes
        y = np.zeros((sizes.size, sizes.max()))
        mask = np.arange(sizes.max())[None, :] < sizes[:, None]
        for i, (_, ys) in enumerate(self.subjects):
            y[i, : len(ys)] = ys
        return y, mask


def _lines(text):
    if not isinstance(text, str):
        text = text.read()
    return text.splitlines()


def _float(tok: str, row: int, col: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"row {row}: non-numeric {col} {tok!r}") from None
    if not np.isfinite(v):
        raise FormatError(f"row {row}: non-finite {col} {tok!r}")
    return v


def parse_dataset(text) -> Dataset:
    """Parse ``time,status[,z1,...]`` CSV text (or a text stream).

    Rows are numbered from 1, counting data rows only.
    """
    lines = [ln for ln in _lines(text) if ln.strip()]
    if not lines:
        raise EmptyDataError("empty input")
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["time", "status"]:
        raise FormatError(f"header must start with 'time,status', got {lines[0]!r}")
    width = len(header)
    obs = []
    for row, line in enumerate(lines[1:], start=1):
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != width:
            raise FormatError(f"row {row}: expected {width} fields, got {len(toks)}")
        t = _float(toks[0], row, "time")
        if t < 0:
            raise FormatError(f"row {row}: negative time {toks[0]!r}")
        if toks[1] not in ("0", "1"):
            raise FormatError(f"row {row}: status must be 0 or 1, got {toks[1]!r}")
        z = tuple(_float(tok, row, header[j + 2]) for j, tok in enumerate(toks[2:]))
        obs.append(Observation(t, toks[1] == "1", z))
    if not obs:
        raise EmptyDataError("no data rows after the header")
    return Dataset(tuple(obs))


def parse_grouped(text) -> GroupedDataset:
    """Parse ``subject,y`` CSV text; each subject's rows must be contiguous."""
    lines = [ln for ln in _lines(text) if ln.strip()]
    if not lines:
        raise EmptyDataError("empty input")
    header = [h.strip() for h in lines[0].split(",")]
    if header != ["subject", "y"]:
        raise FormatError(f"header must be 'subject,y', got {lines[0]!r}")
    subjects: list[tuple[str, list[float]]] = []
    seen: set[str] = set()
    for row, line in enumerate(lines[1:], start=1):
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != 2 or not toks[0]:
            raise FormatError(f"row {row}: expected 'subject,y'")
        sid = toks[0]
        y = _float(toks[1], row, "y")
        if subjects and subjects[-1][0] == sid:
            subjects[-1][1].append(y)
            continue
        if sid in seen:
            raise FormatError(f"row {row}: rows of subject {sid} are not contiguous")
        seen.add(sid)
        subjects.append((sid, [y]))
    if not subjects:
        raise EmptyDataError("no data rows after the header")
    return GroupedDataset(tuple((sid, tuple(ys)) for sid, ys in subjects))


def serialize_dataset(data: Dataset) -> str:
    buf = io.StringIO()
    k = data.n_covariates
    buf.write(",".join(["time", "status"] + [f"z{j + 1}" for j in range(k)]) + "\n")
    for o in data.observations:
        fields = [repr(o.time), "1" if o.event else "0"] + [repr(z) for z in o.covariates]
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def serialize_grouped(data: GroupedDataset) -> str:
    buf = io.StringIO()
    buf.write("subject,y\n")
    for sid, ys in data.subjects:
        for y in ys:
            buf.write(f"{sid},{y!r}\n")
    return buf.getvalue()
