from __future__ import annotations

import hashlib
import json
import os
from typing import Any, List

import numpy as np


def derive_seed(seed: int, index: int) -> int:
    """Counter-based child seed: SeedSequence(seed, spawn_key=(index,)) folded to 63 bits."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def format_real(value: float) -> str:
    """17 significant digits, the CSV wire format for reals."""
    return f"{float(value):.17g}"


def parse_float(raw: str) -> float:
    return float(str(raw).strip().replace(",", "."))


def parse_float_list(raw: str) -> List[float]:
    """Comma separated reals; with a `;` separator the items may use comma decimals."""
    text = str(raw or "")
    sep = ";" if ";" in text else ","
    return [parse_float(p) for p in (s.strip() for s in text.split(sep)) if p]


def stable_hash(payload: Any) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def get_log_level() -> str:
    level = os.getenv("WHOEFFDING_LOG_LEVEL", "WARNING").strip().upper()
    return level or "WARNING"
