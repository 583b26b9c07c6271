"""Append-only JSON-lines persistence for reports, metrics, and decisions."""

from __future__ import annotations

import json
import logging
import os
import re
from datetime import datetime
from typing import Iterator, Optional

from .clock import parse_utc
from .errors import SinkError

logger = logging.getLogger(__name__)

REPORTS = "reports"
METRICS = "metrics"
TRANSFERS = "transfers"
DECISIONS = "decisions"

_KIND_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def _record_time(record: dict) -> Optional[datetime]:
    value = record.get("ts") or record.get("timestamp")
    if not isinstance(value, str):
        return None
    try:
        return parse_utc(value)
    except ValueError:
        return None


def _record_job(record: dict) -> Optional[str]:
    if isinstance(record.get("job_uuid"), str):
        return record["job_uuid"]
    transfer = record.get("transfer")
    if isinstance(transfer, dict) and isinstance(transfer.get("job_uuid"), str):
        return transfer["job_uuid"]
    return None


class RecordStore:
    """One JSON-lines file per record kind inside a store directory."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def path_for(self, kind: str) -> str:
        if not _KIND_RE.match(kind):
            raise ValueError(f"invalid record kind {kind!r}")
        return os.path.join(self.directory, f"{kind}.jsonl")

    def append(self, kind: str, record: dict) -> None:
        try:
            with open(self.path_for(kind), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        except OSError as exc:
            raise SinkError(f"store append failed: {exc}") from exc

    def scan(
        self,
        kind: str,
        since: Optional[datetime] = None,
        until: Optional[datetime] = None,
        job_uuid: Optional[str] = None,
    ) -> Iterator[dict]:
        """Yield records in append order; corrupt lines are skipped with a warning.

        Time filters ([since, until)) match records carrying a ts/timestamp
        field; records without one are excluded once a time filter is set.
        """
        path = self.path_for(kind)
        if not os.path.exists(path):
            return
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("skipping corrupt record %s:%d", path, lineno)
                    continue
                if not isinstance(record, dict):
                    logger.warning("skipping non-object record %s:%d", path, lineno)
                    continue
                if since is not None or until is not None:
                    at = _record_time(record)
                    if at is None:
                        continue
                    if since is not None and at < since:
                        continue
                    if until is not None and at >= until:
                        continue
                if job_uuid is not None and _record_job(record) != job_uuid:
                    continue
                yield record
