"""
Multiview SBM Test - Run Ledger
===============================

Append-only JSONL record of every CLI run. Each entry carries the hash of
the previous entry, so edited or reordered lines are detected by verify().
"""

import hashlib
import json
import logging
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from dataclasses_json import dataclass_json

logger = logging.getLogger(__name__)

GENESIS_HASH = hashlib.sha256(b"MVTEST_LEDGER_GENESIS_0").hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(payload: Dict[str, Any]) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode()


REQUIRED_FIELDS = {"run_id", "timestamp", "command", "config", "seed", "prev_hash", "entry_hash"}


@dataclass_json
@dataclass
class LedgerEntry:
    run_id: str
    timestamp: str
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    outputs: Dict[str, str] = field(default_factory=dict)  # path -> sha256
    prev_hash: str = GENESIS_HASH
    entry_hash: str = ""

    def compute_hash(self) -> str:
        # outputs and config are already JSON-normalized, so to_dict round-trips
        body = self.to_dict()
        body.pop("entry_hash")
        return hashlib.sha256(_canonical(body)).hexdigest()


class RunLedger:
    """Hash-chained run history stored at one JSONL path"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def _last_hash(self) -> str:
        if not self.path.exists():
            return GENESIS_HASH
        last = None
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    last = line
        if last is None:
            return GENESIS_HASH
        return json.loads(last)["entry_hash"]

    def append(
        self,
        command: str,
        config: Dict[str, Any],
        seed: Optional[int] = None,
        outputs: Iterable[Union[str, Path]] = (),
    ) -> LedgerEntry:
        entry = LedgerEntry(
            run_id=uuid.uuid4().hex,
            timestamp=datetime.now(timezone.utc).isoformat(),
            command=command,
            config=json.loads(_canonical(config)),
            seed=seed,
            outputs={str(p): file_digest(p) for p in outputs if Path(p).is_file()},
            prev_hash=self._last_hash(),
        )
        entry.entry_hash = entry.compute_hash()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(entry.to_json() + "\n")
        logger.debug("ledger entry %s appended for %s", entry.run_id, command)
        return entry

    def entries(self) -> List[LedgerEntry]:
        if not self.path.exists():
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [LedgerEntry.from_json(line) for line in f if line.strip()]

    def verify(self) -> Dict[str, Any]:
        """Walk the chain and report CHAIN_BREAK, HASH_MISMATCH and CORRUPTION lines"""
        if not self.path.exists():
            return {"status": "EMPTY", "entries": 0, "violations": [], "integrity": True}

        violations = []
        count = 0
        expected = GENESIS_HASH
        with open(self.path, "r", encoding="utf-8") as f:
            for line_num, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    missing = REQUIRED_FIELDS - set(raw)
                    if missing:
                        raise ValueError(f"missing fields: {sorted(missing)}")
                    entry = LedgerEntry.from_dict(raw)
                except (ValueError, KeyError, TypeError) as e:
                    violations.append({"line": line_num, "error": str(e), "violation": "CORRUPTION"})
                    continue
                count += 1
                if entry.prev_hash != expected:
                    violations.append({
                        "line": line_num,
                        "run_id": entry.run_id,
                        "expected_hash": expected,
                        "found_hash": entry.prev_hash,
                        "violation": "CHAIN_BREAK",
                    })
                if entry.compute_hash() != entry.entry_hash:
                    violations.append({"line": line_num, "run_id": entry.run_id, "violation": "HASH_MISMATCH"})
                expected = entry.entry_hash

        return {
            "status": "VIOLATED" if violations else "CLEAN",
            "entries": count,
            "violations": violations,
            "integrity": not violations,
            "last_verified": datetime.now(timezone.utc).isoformat(),
        }
