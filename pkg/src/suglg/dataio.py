"""Dataset file formats and the embedded Fars-province rainfall data.

The interchange format is a UTF-8 CSV with header ``id,x,y,value,cens_lo,
cens_hi``: exact rows carry a value and empty censor columns, censored rows
carry an empty value and at least one bound (literal ``-inf``/``+inf``
allowed).  Row order defines site indices.  Floats are written with 17
significant digits so every writer/reader pair round-trips exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import CensorInterval, SpatialDataset
from .spatial import LocationSet

_HEADER = ["id", "x", "y", "value", "cens_lo", "cens_hi"]

CENSOR_LIMIT = 0.01  # zero rainfall is recorded as "below 0.01 inch"


@dataclass(frozen=True)
class RainfallRecord:
    station: str
    precipitation: float
    longitude: float
    latitude: float
    elevation: float
    censored: bool


_RAINFALL_TABLE = (
    ("Abadeh", 1.09345684, 52.40, 31.11, 2030),
    ("Arsanjan", 0.48489401, 53.16, 29.56, 1703),
    ("Bavanat", 0.21459461, 53.40, 30.28, 2231),
    ("Darab", 0.0, 54.17, 28.47, 1098),
    ("Eqlid", 1.29816493, 52.38, 30.54, 2300),
    ("Estahban", 0.41391564, 54.02, 29.05, 1609),
    ("Farashband", 0.37737203, 52.06, 28.48, 782),
    ("Fasa", 0.47246634, 53.41, 28.56, 1288),
    ("Firuzabad", 0.0, 52.33, 28.53, 1362),
    ("Gerash", 0.29725655, 54.15, 27.69, 403),
    ("Jahrom", 0.21737661, 53.32, 28.29, 1082),
    ("Kavar", 0.27805494, 52.65, 29.16, 651),
    ("Kazerun", 0.31700190, 51.39, 29.36, 860),
    ("Kherameh", 0.26663226, 53.29, 29.63, 875),
    ("Khonj", 0.55668826, 53.40, 27.98, 511),
    ("Khorrambid", 0.77678033, 53.09, 30.35, 2251),
    ("Lamerd", 0.0, 53.12, 27.22, 405),
    ("Larestan", 0.0, 54.17, 27.42, 792),
    ("Mamasani", 0.83764997, 51.32, 30.04, 972),
    ("Marvdasht", 0.51173630, 52.54, 29.56, 1605),
    ("Mohr", 0.23188202, 52.88, 27.55, 659),
    ("Neyriz", 0.58328311, 54.20, 29.12, 1632),
    ("Pasargad", 0.74427868, 53.21, 30.19, 1614),
    ("Qir-o-Karzin", 0.0, 53.03, 28.28, 746),
    ("Rostam", 1.49020491, 51.51, 30.25, 864),
    ("Sarvestan", 0.42793923, 53.21, 29.27, 719),
    ("Sepidan", 1.61606073, 52.00, 30.14, 2201),
    ("Shiraz", 0.68990878, 52.36, 29.32, 1484),
    ("Zarghan", 0.22756008, 52.43, 29.47, 1596),
    ("Zarrindasht", 0.34310578, 54.25, 28.21, 1029),
)


def rainfall_records() -> list:
    """The 30 Fars-province stations; a record with zero precipitation is
    censored to [0, 0.01)."""
    return [
        RainfallRecord(station=name, precipitation=precip, longitude=lon,
                       latitude=lat, elevation=float(elev),
                       censored=(precip == 0.0))
        for name, precip, lon, lat, elev in _RAINFALL_TABLE
    ]


def embedded_rainfall() -> SpatialDataset:
    """Rainfall dataset with planar (longitude, latitude) coordinates and a
    constant-mean design; the five dry-recorded stations enter as censored
    intervals [0, 0.01)."""
    records = rainfall_records()
    coords = np.array([[r.longitude, r.latitude] for r in records])
    exact = {}
    censored = {}
    for i, r in enumerate(records):
        if r.censored:
            censored[i] = CensorInterval(0.0, CENSOR_LIMIT)
        else:
            exact[i] = r.precipitation
    return SpatialDataset(
        locations=LocationSet(coords),
        design=np.ones((len(records), 1)),
        exact=exact,
        censored=censored,
    )


def _fmt(value: float) -> str:
    if value == math.inf:
        return "+inf"
    if value == -math.inf:
        return "-inf"
    return "%.17g" % value


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(
            f"line {line_no}: cannot parse {column}={text!r} as a number"
        ) from None


def parse_dataset(path) -> SpatialDataset:
    """Read a dataset CSV, validating structure row by row; error messages
    carry 1-based line numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("line 1: empty file, expected header") from None
        if header != _HEADER:
            raise ValueError(
                f"line 1: header must be {','.join(_HEADER)}, got {','.join(header)}")
        coords = []
        exact = {}
        censored = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_HEADER):
                raise ValueError(
                    f"line {line_no}: expected {len(_HEADER)} fields, got {len(row)}")
            _, x_s, y_s, val_s, lo_s, hi_s = (f.strip() for f in row)
            x = _parse_float(x_s, line_no, "x")
            y = _parse_float(y_s, line_no, "y")
            idx = len(coords)
            coords.append((x, y))
            has_val = val_s != ""
            has_bound = lo_s != "" or hi_s != ""
            if has_val and has_bound:
                raise ValueError(
                    f"line {line_no}: both value and censor bounds set")
            if not has_val and not has_bound:
                raise ValueError(
                    f"line {line_no}: row has neither value nor censor bounds")
            if has_val:
                exact[idx] = _parse_float(val_s, line_no, "value")
            else:
                lo = _parse_float(lo_s, line_no, "cens_lo") if lo_s else -math.inf
                hi = _parse_float(hi_s, line_no, "cens_hi") if hi_s else math.inf
                if not lo < hi:
                    raise ValueError(
                        f"line {line_no}: censor lower bound {lo} is not below "
                        f"upper bound {hi}")
                censored[idx] = CensorInterval(lo, hi)
    locs = LocationSet(np.array(coords))
    return SpatialDataset(locations=locs, design=np.ones((len(coords), 1)),
                          exact=exact, censored=censored)


def write_dataset(ds: SpatialDataset, path, ids=None) -> None:
    n = ds.n
    if ids is None:
        ids = [f"s{i:03d}" for i in range(n)]
    if len(ids) != n:
        raise ValueError(f"need {n} ids, got {len(ids)}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for i in range(n):
            x, y = ds.locations.coords[i]
            if i in ds.exact:
                writer.writerow([ids[i], _fmt(x), _fmt(y), _fmt(ds.exact[i]), "", ""])
            else:
                iv = ds.censored[i]
                writer.writerow([ids[i], _fmt(x), _fmt(y), "", _fmt(iv.lo), _fmt(iv.hi)])


def parse_locations(path) -> LocationSet:
    """Read new prediction locations from a CSV whose header contains x and
    y columns (extra columns are ignored)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError("line 1: empty file, expected header") from None
        try:
            xi = header.index("x")
            yi = header.index("y")
        except ValueError:
            raise ValueError("line 1: header must contain x and y columns") from None
        coords = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            coords.append((
                _parse_float(row[xi].strip(), line_no, "x"),
                _parse_float(row[yi].strip(), line_no, "y"),
            ))
    if not coords:
        raise ValueError("no locations in file")
    return LocationSet(np.array(coords))


def write_latents(path, locs: LocationSet, y_true: np.ndarray, latents: dict,
                  ids=None) -> None:
    n = len(locs)
    if ids is None:
        ids = [f"s{i:03d}" for i in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "y_true", "u", "v", "lambda", "rho"])
        for i in range(n):
            x, y = locs.coords[i]
            writer.writerow([
                ids[i], _fmt(x), _fmt(y), _fmt(y_true[i]),
                _fmt(latents["u"][i]), _fmt(latents["v"][i]),
                _fmt(latents["lambda"][i]), _fmt(latents["rho"][i]),
            ])


def write_predictions(path, results) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "mean", "sd", "q2.5", "q50", "q97.5"])
        for res in results:
            writer.writerow([
                _fmt(res.location[0]), _fmt(res.location[1]), _fmt(res.mean),
                _fmt(res.sd), _fmt(res.quantiles[0]), _fmt(res.quantiles[1]),
                _fmt(res.quantiles[2]),
            ])


def holdout_map(ds: SpatialDataset) -> dict:
    """Location -> value map from a fully exact dataset, for scoring."""
    if ds.censored:
        raise ValueError("holdout dataset must be fully exact")
    coords = ds.locations.coords
    return {(float(coords[i, 0]), float(coords[i, 1])): ds.exact[i]
            for i in range(ds.n)}
