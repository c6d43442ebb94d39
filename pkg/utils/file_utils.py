"""
File and directory utilities for PRISM
"""

import json
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple

from utils.errors import DataError

logger = logging.getLogger(__name__)


class FileUtils:
    """Utility class for file operations"""

    @staticmethod
    def load_json(file_path: Path) -> Dict[str, Any]:
        """Load JSON file; a missing file yields an empty dict"""
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except FileNotFoundError:
            logger.warning(f"Config file not found: {file_path}")
            return {}
        except json.JSONDecodeError as e:
            raise DataError(f"Error parsing {file_path}: {e}") from e

    @staticmethod
    def save_json(data: Dict[str, Any], file_path: Path) -> Path:
        """Save data to JSON file"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=4, ensure_ascii=False)
        logger.debug(f"Saved: {file_path}")
        return file_path

    @staticmethod
    def canonical_json(data: Any) -> str:
        """Compact, key-sorted JSON used for hashing and JSONL lines"""
        return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)

    @staticmethod
    def append_jsonl(rows: List[Dict[str, Any]], file_path: Path) -> int:
        """Append rows to a JSONL file, one object per line"""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, 'a', encoding='utf-8') as f:
            for row in rows:
                f.write(FileUtils.canonical_json(row) + "\n")
        return len(rows)

    @staticmethod
    def write_jsonl(rows: List[Dict[str, Any]], file_path: Path) -> int:
        """Rewrite a JSONL file atomically"""
        file_path = Path(file_path)
        tmp_path = file_path.with_suffix(file_path.suffix + ".tmp")
        with open(tmp_path, 'w', encoding='utf-8') as f:
            for row in rows:
                f.write(FileUtils.canonical_json(row) + "\n")
        tmp_path.replace(file_path)
        return len(rows)

    @staticmethod
    def iter_jsonl(file_path: Path, keep_going: bool = False) -> Iterator[Tuple[int, Dict[str, Any]]]:
        """Yield (line_number, object); corrupt lines raise DataError unless keep_going"""
        with open(file_path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield line_number, json.loads(line)
                except json.JSONDecodeError as e:
                    if not keep_going:
                        raise DataError(f"corrupt JSON in {file_path}: {e}", line_number) from e
                    logger.warning(f"Skipping corrupt line {line_number} in {file_path}")

    @staticmethod
    def get_text_hash(text: str) -> str:
        """SHA-256 of a string"""
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
