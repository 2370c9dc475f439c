"""
Cache keys and artifact identities
"""
import hashlib
import json
from importlib.metadata import PackageNotFoundError, version

from pydantic import BaseModel


def config_hash(subtree: BaseModel | dict) -> str:
    data = subtree.model_dump(mode="json") if isinstance(subtree, BaseModel) else subtree
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()


def cache_key(stage: str, subtree_hash: str, upstream: list[str]) -> str:
    """Hash of the stage's config subtree and its upstream artifact ids"""
    payload = json.dumps({"stage": stage, "config": subtree_hash, "upstream": sorted(upstream)})
    return hashlib.sha256(payload.encode()).hexdigest()


def artifact_id(kind: str, key: str) -> str:
    return f"{kind}:{key[:16]}"


def code_version() -> str:
    try:
        return version("tumorda")
    except PackageNotFoundError:
        return "unknown"
