"""HTTP clients for externally hosted annotator services.

Wire protocol (JSON over HTTP):

    POST /link    {"doc_id", "tokens", "characters"}      -> {"clusters": {name: [[s,e],...]}}
    POST /judge   {"prompt", "decoding"}                  -> {"answer": "Yes"|"No"}
    POST /expand  {"tokens", "seeds": {name: [[s,e],...]}} -> {"clusters": {name: [[s,e],...]}}

Spans are 0-based, end-inclusive. Requests carry a fixed decoding
configuration so that services can honour the determinism contract, and
responses are cached on disk keyed by a request hash (directory from the
``cache_dir`` argument or the BOOKCOREF_CACHE_DIR environment variable), so
re-runs replay bit-identically without touching the service.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from typing import Iterable, Mapping

import requests

from .errors import ContractError, TransportError
from .model import ClusterKey, ClusterSet, Document, Mention
from .pipeline import ExpandRequest, JudgeRequest

CACHE_DIR_ENV = "BOOKCOREF_CACHE_DIR"

#: Fixed decoding settings sent with every judge request.
DECODING = {"temperature": 0.0, "seed": 0}


class ServiceClient:
    """Tiny JSON POST client with bounded retries and a response cache."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.25,
        cache_dir: str | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_DIR_ENV)
        self.session = session or requests.Session()
        self.log: list[dict] = []

    def _cache_path(self, digest: str) -> str | None:
        if not self.cache_dir:
            return None
        return os.path.join(self.cache_dir, f"{digest}.json")

    def post(self, route: str, payload: dict) -> dict:
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        digest = hashlib.sha256((route + "\n" + body).encode()).hexdigest()
        path = self._cache_path(digest)
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                response = json.load(f)
            self.log.append({"route": route, "request": digest, "cached": True})
            return response

        url = self.base_url + route
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(
                    url, data=body, headers={"Content-Type": "application/json"}, timeout=self.timeout
                )
                if resp.status_code >= 500:
                    last = TransportError(f"{url} returned {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"{url} rejected request: {resp.status_code}")
                else:
                    data = resp.json()
                    if path:
                        os.makedirs(self.cache_dir, exist_ok=True)  # type: ignore[arg-type]
                        tmp = path + ".tmp"
                        with open(tmp, "w", encoding="utf-8") as f:
                            json.dump(data, f)
                        os.replace(tmp, path)
                    self.log.append({"route": route, "request": digest, "cached": False})
                    return data
            except (requests.ConnectionError, requests.Timeout) as e:
                last = e
            if attempt < self.retries and self.backoff:
                time.sleep(self.backoff * (attempt + 1))
        raise TransportError(f"{url} unreachable after {self.retries + 1} attempts: {last}")


def _parse_wire_clusters(raw: object, context: str) -> dict[str, list[Mention]]:
    if not isinstance(raw, dict):
        raise ContractError(f"{context}: 'clusters' must be an object")
    out: dict[str, list[Mention]] = {}
    for key, spans in raw.items():
        if not isinstance(spans, list):
            raise ContractError(f"{context}: spans of {key!r} must be an array")
        out[key] = [Mention(int(s[0]), int(s[1])) for s in spans]
    return out


class HttpLinker:
    def __init__(self, client: ServiceClient):
        self.client = client
        self.name = f"http:{client.base_url}/link"

    def link(self, doc: Document) -> ClusterSet:
        data = self.client.post(
            "/link",
            {"doc_id": doc.doc_id, "tokens": list(doc.tokens), "characters": list(doc.characters)},
        )
        clusters = _parse_wire_clusters(data.get("clusters"), "/link")
        return ClusterSet.build(doc.doc_id, "initialized", clusters)


class HttpJudge:
    def __init__(self, client: ServiceClient):
        self.client = client
        self.name = f"http:{client.base_url}/judge"

    def judge(self, request: JudgeRequest) -> bool:
        data = self.client.post("/judge", {"prompt": request.prompt, "decoding": DECODING})
        answer = str(data.get("answer", "")).strip().lower()
        if answer == "yes":
            return True
        if answer == "no":
            return False
        raise ContractError(f"/judge returned {data.get('answer')!r}, expected 'Yes' or 'No'")


class HttpExpander:
    def __init__(self, client: ServiceClient):
        self.client = client
        self.name = f"http:{client.base_url}/expand"

    def expand(self, request: ExpandRequest) -> Mapping[ClusterKey, Iterable[Mention]]:
        seeds = {
            str(key): [[m.start, m.end] for m in ms] for key, ms in request.seeds.items()
        }
        data = self.client.post("/expand", {"tokens": list(request.tokens), "seeds": seeds})
        wire = _parse_wire_clusters(data.get("clusters"), "/expand")
        by_name: Mapping[str, ClusterKey] = {str(key): key for key in request.seeds}
        out: dict[ClusterKey, list[Mention]] = {}
        for name, mentions in wire.items():
            out[by_name.get(name, name)] = mentions
        return out
