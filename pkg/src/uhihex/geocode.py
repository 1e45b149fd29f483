"""Address geocoding against an HTTP service, with an on-disk cache.

Service contract: ``GET <base_url>?<query_param>=<address>`` answers with a
JSON object. A match carries numeric ``x`` and ``y`` in the working planar
CRS. A miss is HTTP 404, ``"found": 0``/``false``, or null ``x``/``y``.
Anything else is a malformed response.

The cache holds one JSON document per address (file name is the SHA-256 of
the address key). Misses are cached too, so a second run is fully offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import requests

from .errors import ServiceError
from .features import BuildingRecord
from .raster import GeoPoint

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = "UHIHEX_CACHE_DIR"


class GeocodeError(ServiceError):
    pass


class _Throttle:
    """Spaces request starts at least ``interval`` seconds apart, across threads."""

    def __init__(self, rate_per_second: float):
        self.interval = 1.0 / rate_per_second if rate_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.interval
        delay = start - now
        if delay > 0:
            time.sleep(delay)


@dataclass
class GeocodeClient:
    base_url: str
    cache_dir: Path
    rate_limit: float = 1.0
    max_concurrency: int = 1
    max_retries: int = 3
    timeout: float = 10.0
    backoff: float = 0.5
    query_param: str = "address"
    session: Optional[requests.Session] = None
    network_calls: int = field(default=0, init=False)

    def __post_init__(self):
        self.cache_dir = Path(self.cache_dir)
        self._throttle = _Throttle(self.rate_limit)
        self._count_lock = threading.Lock()

    @classmethod
    def from_config(cls, cfg: dict, default_cache: Optional[Path] = None) -> "GeocodeClient":
        cache = os.environ.get(CACHE_ENV_VAR) or cfg.get("cache_dir") or default_cache
        if not cache:
            raise ValueError("geocode cache_dir not configured")
        return cls(
            base_url=cfg["base_url"],
            cache_dir=Path(cache),
            rate_limit=float(cfg.get("rate_limit", 1.0)),
            max_concurrency=int(cfg.get("max_concurrency", 1)),
            max_retries=int(cfg.get("max_retries", 3)),
            timeout=float(cfg.get("timeout", 10.0)),
        )

    def _cache_path(self, address: str) -> Path:
        digest = hashlib.sha256(address.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def cached(self, address: str) -> Optional[dict]:
        path = self._cache_path(address)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def _store(self, address: str, doc: dict):
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path = self._cache_path(address)
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _fetch(self, address: str) -> dict:
        session = self.session or requests
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self._throttle.wait()
            with self._count_lock:
                self.network_calls += 1
            try:
                resp = session.get(self.base_url, params={self.query_param: address}, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 404:
                return {"address": address, "found": False}
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = GeocodeError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise GeocodeError(f"{address!r}: unexpected HTTP {resp.status_code}")
            return _interpret(address, resp.text)
        raise GeocodeError(f"{address!r}: giving up after {self.max_retries + 1} attempts: {last_error}")

    def lookup(self, address: str) -> Optional[GeoPoint]:
        doc = self.cached(address)
        if doc is None:
            doc = self._fetch(address)
            self._store(address, doc)
        if not doc.get("found"):
            return None
        return GeoPoint(float(doc["x"]), float(doc["y"]))


def _interpret(address: str, text: str) -> dict:
    try:
        body = json.loads(text)
    except ValueError:
        raise GeocodeError(f"{address!r}: response is not JSON") from None
    if not isinstance(body, dict):
        raise GeocodeError(f"{address!r}: response is not a JSON object")
    found = body.get("found")
    if found in (0, False) or (body.get("x") is None and body.get("y") is None and ("x" in body or "y" in body)):
        return {"address": address, "found": False}
    x, y = body.get("x"), body.get("y")
    try:
        x, y = float(x), float(y)
    except (TypeError, ValueError):
        raise GeocodeError(f"{address!r}: response lacks numeric x/y") from None
    return {"address": address, "found": True, "x": x, "y": y}


def geocode(client: GeocodeClient, records: List[BuildingRecord]) -> Tuple[List[BuildingRecord], List[str]]:
    """Fill in missing locations.

    Returns ``(records, rejected)``: records in input order with locations
    filled where the service matched, and the address keys it could not
    resolve. Unresolved records keep ``location=None``.
    """
    todo = sorted({r.address_key for r in records if r.needs_geocoding})
    results = {}
    if todo:
        with ThreadPoolExecutor(max_workers=max(1, client.max_concurrency)) as pool:
            for key, point in zip(todo, pool.map(client.lookup, todo)):
                results[key] = point
    out = []
    for rec in records:
        if rec.needs_geocoding and results.get(rec.address_key) is not None:
            rec = replace(rec, location=results[rec.address_key])
        out.append(rec)
    rejected = [k for k in todo if results[k] is None]
    if rejected:
        logger.warning("%d address(es) could not be geocoded", len(rejected))
    return out, rejected
