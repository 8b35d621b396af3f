"""Station elevations from an EPQS-style point query service, with a JSON cache."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import requests

from .errors import ElevationServiceError, OfflineMissError

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://epqs.nationalmap.gov/v1/json"
CACHE_ENV = "WXKRIG_CACHE_DIR"
MAX_IN_FLIGHT = 4
RETRIES = 3
NO_DATA = -1e5


def default_cache_dir():
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "wxkrig"


def cache_key(lat, lon):
    return f"{round(lat, 5):.5f},{round(lon, 5):.5f}"


class ElevationCache:
    """Elevation in metres keyed by coordinates rounded to 5 decimals."""

    def __init__(self, path=None):
        self.path = Path(path) if path else default_cache_dir() / "elevations.json"
        self.entries = {}
        if self.path.exists():
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))

    def get(self, lat, lon):
        hit = self.entries.get(cache_key(lat, lon))
        return None if hit is None else hit["elev"]

    def put(self, lat, lon, elev, source="service"):
        self.entries[cache_key(lat, lon)] = {"elev": float(elev), "source": source}

    def __contains__(self, coords):
        return cache_key(*coords) in self.entries

    def __len__(self):
        return len(self.entries)

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.entries, indent=1, sort_keys=True), encoding="utf-8")
        tmp.replace(self.path)


def _find_elevation(body):
    if isinstance(body, dict):
        for key in ("value", "elevation", "Elevation", "elev"):
            if key in body:
                try:
                    return float(body[key])
                except (TypeError, ValueError):
                    pass
        for v in body.values():
            found = _find_elevation(v)
            if found is not None:
                return found
    return None


def query_elevation(lat, lon, endpoint=DEFAULT_ENDPOINT, session=None, retries=RETRIES,
                    backoff=0.5, timeout=10.0):
    """One elevation lookup; network errors are retried with exponential backoff."""
    http = session or requests
    params = {"x": lon, "y": lat, "wkid": 4326, "units": "Meters"}
    last = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = http.get(endpoint, params=params, timeout=timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            last = exc
            logger.debug("elevation query (%s, %s) attempt %d failed: %s",
                         lat, lon, attempt + 1, exc)
            continue
        try:
            body = resp.json()
        except ValueError:
            raise ElevationServiceError(f"malformed JSON for ({lat}, {lon})") from None
        elev = _find_elevation(body)
        if elev is None or elev <= NO_DATA:
            raise ElevationServiceError(f"no elevation in response for ({lat}, {lon})")
        return elev
    raise ElevationServiceError(f"network failure for ({lat}, {lon}): {last}")


def fetch_elevations(stations, endpoint=DEFAULT_ENDPOINT, cache: ElevationCache | None = None,
                     offline=False, session=None, backoff=0.5):
    """Fill in missing station elevations from the cache or the service.

    Fetched values are written through to ``cache``. In ``offline`` mode a
    cache miss raises :class:`OfflineMissError` listing every missing id.
    """
    cache = cache if cache is not None else ElevationCache()
    out = list(stations)
    todo = []
    for i, s in enumerate(out):
        if s.elev is not None:
            continue
        hit = cache.get(s.lat, s.lon)
        if hit is not None:
            out[i] = replace(s, elev=hit)
        else:
            todo.append(i)
    if not todo:
        return out
    if offline:
        raise OfflineMissError([out[i].id for i in todo])

    def work(i):
        s = out[i]
        return i, query_elevation(s.lat, s.lon, endpoint, session, backoff=backoff)

    failures = []
    with ThreadPoolExecutor(max_workers=MAX_IN_FLIGHT) as pool:
        futures = [pool.submit(work, i) for i in todo]
        for fut, i in zip(futures, todo):
            try:
                _, elev = fut.result()
            except ElevationServiceError as exc:
                failures.append((out[i].id, str(exc)))
                continue
            cache.put(out[i].lat, out[i].lon, elev)
            out[i] = replace(out[i], elev=elev)
    cache.save()
    if failures:
        raise ElevationServiceError(
            "elevation lookup failed for " + "; ".join(f"{sid}: {msg}" for sid, msg in failures)
        )
    return out
