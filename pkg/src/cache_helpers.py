"""On-disk cache of dynamical maps and transfer tensors.

An SQLite index (``index.db``) maps ``(key, stage)`` to a self-describing
``.npz`` payload in the same directory.
"""

import hashlib
import json
import logging
import os
import sqlite3
import zipfile
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from src.exceptions import CacheError

logger = logging.getLogger(__name__)

INDEX_FILE = "index.db"
PAYLOAD_SCHEMA = "pil-cache/1"


@dataclass
class CacheEntry:
    key: str
    stage: str
    path: str
    arrays: Dict[str, np.ndarray]
    metadata: dict


def _index_path(cache_dir: str) -> str:
    return os.path.join(cache_dir, INDEX_FILE)


def hash_payload(payload: dict) -> str:
    """sha256 of the canonical JSON form of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def maps_cache_key(model_hash: str, dt: float, mem_len: int, n_map_steps: int, quadrature: dict) -> str:
    """Key of the dynamical-maps stage. Jump operators never enter it."""
    return hash_payload(
        {
            "stage": "maps",
            "model": model_hash,
            "dt": repr(float(dt)),
            "mem_len": int(mem_len),
            "n_map_steps": int(n_map_steps),
            "quadrature": quadrature,
        }
    )


def ttm_cache_key(maps_key: str, n_tensors: int, tau_mem: Optional[float], kernel_mode: str) -> str:
    return hash_payload(
        {
            "stage": "ttm",
            "maps": maps_key,
            "n_tensors": int(n_tensors),
            "tau_mem": None if tau_mem is None else repr(float(tau_mem)),
            "kernel_mode": kernel_mode,
        }
    )


def init_cache(cache_dir: str) -> None:
    """Creates the cache directory and index table if needed."""
    os.makedirs(cache_dir, exist_ok=True)
    conn = None
    try:
        conn = sqlite3.connect(_index_path(cache_dir))
        c = conn.cursor()
        c.execute(
            """CREATE TABLE IF NOT EXISTS cache_entries
                     (key TEXT NOT NULL,
                      stage TEXT NOT NULL,
                      path TEXT NOT NULL,
                      created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                      PRIMARY KEY (key, stage))"""
        )
        conn.commit()
        logger.debug(f"Cache index ready in {cache_dir}")
    except sqlite3.Error as e:
        raise CacheError(f"Cannot initialize cache index in '{cache_dir}': {e}") from e
    finally:
        if conn is not None:
            conn.close()


def save_entry(cache_dir: str, key: str, stage: str, arrays: Dict[str, np.ndarray], metadata: dict) -> Optional[str]:
    """Writes a payload and registers it in the index.

    Args:
        cache_dir (str): Cache directory.
        key (str): Content hash of the stage inputs.
        stage (str): Stage name ("maps" or "ttm").
        arrays (Dict[str, np.ndarray]): Arrays to store.
        metadata (dict): JSON-serializable description stored alongside.

    Returns:
        Optional[str]: Payload path, or None if the entry could not be written.
    """
    conn = None
    filename = f"{stage}-{key[:32]}.npz"
    path = os.path.join(cache_dir, filename)
    tmp_path = path + ".tmp"
    try:
        init_cache(cache_dir)
        meta = dict(metadata, schema=PAYLOAD_SCHEMA, stage=stage, key=key)
        with open(tmp_path, "wb") as fh:
            np.savez(fh, metadata=np.array(json.dumps(meta, sort_keys=True)), **arrays)
        os.replace(tmp_path, path)
        conn = sqlite3.connect(_index_path(cache_dir))
        c = conn.cursor()
        c.execute(
            "INSERT OR REPLACE INTO cache_entries (key, stage, path) VALUES (?, ?, ?)",
            (key, stage, filename),
        )
        conn.commit()
        logger.info(f"Saved cache entry for stage '{stage}' (key={key[:12]})")
        return path
    except (OSError, sqlite3.Error, CacheError) as e:
        logger.error(f"Error saving cache entry for stage '{stage}': {e}")
        return None
    finally:
        if conn is not None:
            conn.close()
        if os.path.exists(tmp_path):
            os.remove(tmp_path)


def _lookup(cache_dir: str, key: str, stage: str) -> Optional[str]:
    if not os.path.exists(_index_path(cache_dir)):
        return None
    conn = None
    try:
        conn = sqlite3.connect(_index_path(cache_dir))
        c = conn.cursor()
        c.execute("SELECT path FROM cache_entries WHERE key = ? AND stage = ?", (key, stage))
        row = c.fetchone()
        return row[0] if row else None
    except sqlite3.Error as e:
        logger.warning(f"Cache index unreadable ({e}); ignoring cache")
        return None
    finally:
        if conn is not None:
            conn.close()


def load_entry(cache_dir: str, key: str, stage: str, expected: Optional[dict] = None) -> Optional[CacheEntry]:
    """Loads a cached payload.

    Missing entries return None silently. Unreadable payloads or metadata that
    contradicts ``expected`` are logged as warnings, dropped from the index and
    reported as None so the caller recomputes.
    """
    filename = _lookup(cache_dir, key, stage)
    if filename is None:
        return None
    path = os.path.join(cache_dir, filename)
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = json.loads(str(data["metadata"]))
            arrays = {name: data[name] for name in data.files if name != "metadata"}
        if metadata.get("schema") != PAYLOAD_SCHEMA or metadata.get("key") != key or metadata.get("stage") != stage:
            raise CacheError("payload header does not match the index")
        for name, value in (expected or {}).items():
            if metadata.get(name) != value:
                raise CacheError(f"metadata '{name}' is {metadata.get(name)!r}, expected {value!r}")
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, CacheError) as e:
        logger.warning(f"Cache entry for stage '{stage}' (key={key[:12]}) is corrupt: {e}; recomputing")
        delete_entry(cache_dir, key, stage)
        return None
    logger.debug(f"Loaded cache entry {path}")
    return CacheEntry(key=key, stage=stage, path=path, arrays=arrays, metadata=metadata)


def list_entries(cache_dir: str) -> List[dict]:
    """Returns all index rows, newest first."""
    if not os.path.exists(_index_path(cache_dir)):
        return []
    conn = None
    try:
        conn = sqlite3.connect(_index_path(cache_dir))
        c = conn.cursor()
        c.execute("SELECT key, stage, path, created_at FROM cache_entries ORDER BY created_at DESC, stage")
        return [{"key": r[0], "stage": r[1], "path": r[2], "created_at": r[3]} for r in c.fetchall()]
    except sqlite3.Error as e:
        logger.error(f"Error listing cache entries: {e}")
        return []
    finally:
        if conn is not None:
            conn.close()


def delete_entry(cache_dir: str, key: str, stage: str) -> bool:
    """Removes an entry from the index and deletes its payload."""
    filename = _lookup(cache_dir, key, stage)
    conn = None
    try:
        conn = sqlite3.connect(_index_path(cache_dir))
        c = conn.cursor()
        c.execute("DELETE FROM cache_entries WHERE key = ? AND stage = ?", (key, stage))
        conn.commit()
        if filename:
            payload = os.path.join(cache_dir, filename)
            if os.path.exists(payload):
                os.remove(payload)
        logger.info(f"Deleted cache entry for stage '{stage}' (key={key[:12]})")
        return True
    except (OSError, sqlite3.Error) as e:
        logger.error(f"Error deleting cache entry: {e}")
        return False
    finally:
        if conn is not None:
            conn.close()


def clear_cache(cache_dir: str) -> int:
    """Deletes every entry; returns how many were removed."""
    entries = list_entries(cache_dir)
    removed = sum(1 for e in entries if delete_entry(cache_dir, e["key"], e["stage"]))
    logger.info(f"Cleared {removed} cache entr{'y' if removed == 1 else 'ies'} from {cache_dir}")
    return removed
