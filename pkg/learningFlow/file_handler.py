"""
Handles file operations for run directories and configuration files.

This module provides functions to:
1. Load and save structured YAML configuration files
2. Append records to JSON-lines streams durably and read them back,
   recovering from a torn final line
3. Load and save CSV tables through pandas
"""

import json
import logging
import os
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
import yaml

logger = logging.getLogger(__name__)


def convert_numpy_types(obj: Any) -> Any:
    """Convert numpy scalars and arrays to plain Python types for serialization."""
    if isinstance(obj, dict):
        return {key: convert_numpy_types(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(item) for item in obj]
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def load_config(filepath: str) -> Dict[str, Any]:
    """
    Load a YAML configuration file.

    Args:
        filepath: Path to the YAML file

    Returns:
        Dictionary with the parsed configuration (empty for an empty file)
    """
    try:
        with open(filepath, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except Exception as e:
        raise IOError(f"Error loading {filepath}: {e}")

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise IOError(f"Error loading {filepath}: top level must be a mapping")
    return data


def save_config(config: Dict[str, Any], filepath: str) -> bool:
    """
    Save a configuration dictionary as YAML.

    Args:
        config: Configuration mapping
        filepath: Destination path

    Returns:
        True if successful, raises exception otherwise
    """
    try:
        with open(filepath, 'w', encoding='utf-8') as f:
            yaml.safe_dump(convert_numpy_types(config), f, sort_keys=False)
        return True
    except Exception as e:
        raise IOError(f"Error saving {filepath}: {e}")


def dumps_record(record: Dict[str, Any]) -> str:
    """Serialize one record to a canonical single JSON line (no trailing newline)."""
    return json.dumps(convert_numpy_types(record), sort_keys=True, ensure_ascii=False)


def append_jsonl(filepath: str, record: Dict[str, Any]) -> None:
    """
    Append one record to a JSON-lines file, flushed and synced to disk.

    Args:
        filepath: Path to the JSON-lines file
        record: JSON-serializable mapping
    """
    line = dumps_record(record) + "\n"
    try:
        with open(filepath, 'a', encoding='utf-8') as f:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())
    except Exception as e:
        raise IOError(f"Error appending to {filepath}: {e}")


def read_jsonl(filepath: str, repair: bool = False) -> Tuple[List[Dict[str, Any]], int]:
    """
    Read all records of a JSON-lines file.

    A final line that is not valid JSON (a write torn by a crash) is dropped
    with a warning. Invalid lines anywhere else are a hard error.

    Args:
        filepath: Path to the JSON-lines file
        repair: Truncate the file on disk to the last complete record

    Returns:
        Tuple of (records, number of dropped trailing lines)
    """
    if not os.path.exists(filepath):
        return [], 0

    try:
        with open(filepath, 'rb') as f:
            raw = f.read()
    except Exception as e:
        raise IOError(f"Error loading {filepath}: {e}")

    records = []
    good_bytes = 0
    offset = 0
    lines = raw.split(b"\n")
    for index, line in enumerate(lines):
        is_last = index == len(lines) - 1
        consumed = len(line) + (0 if is_last else 1)
        if not line.strip():
            offset += consumed
            if not is_last:
                good_bytes = offset
            continue
        try:
            records.append(json.loads(line.decode('utf-8')))
        except (json.JSONDecodeError, UnicodeDecodeError):
            remaining = b"".join(lines[index + 1:]).strip()
            if remaining:
                raise IOError(f"Error loading {filepath}: corrupted record at line {index + 1}")
            logger.warning("Dropping torn final record in %s (line %d)", filepath, index + 1)
            if repair:
                with open(filepath, 'r+b') as f:
                    f.truncate(good_bytes)
            return records, 1
        offset += consumed
        if is_last:
            # complete JSON without newline: terminate it so the next append starts a new line
            if repair:
                with open(filepath, 'ab') as f:
                    f.write(b"\n")
        else:
            good_bytes = offset

    return records, 0


def rewrite_jsonl(filepath: str, records: List[Dict[str, Any]]) -> None:
    """Replace a JSON-lines file with the given records (used when truncating for resume)."""
    tmp_path = f"{filepath}.tmp"
    try:
        with open(tmp_path, 'w', encoding='utf-8') as f:
            for record in records:
                f.write(dumps_record(record) + "\n")
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, filepath)
    except Exception as e:
        raise IOError(f"Error saving {filepath}: {e}")


def load_csv(filepath: str) -> pd.DataFrame:
    """
    Load a CSV file into a DataFrame.

    Args:
        filepath: Path to the CSV file

    Returns:
        DataFrame containing the CSV data
    """
    try:
        return pd.read_csv(filepath, skipinitialspace=True)
    except Exception as e:
        raise IOError(f"Error loading {filepath}: {e}")


def save_csv(df: pd.DataFrame, filepath: str) -> bool:
    """
    Save a DataFrame to a CSV file.

    Args:
        df: DataFrame to save
        filepath: Path to save the CSV file

    Returns:
        True if successful, raises exception otherwise
    """
    try:
        df.to_csv(filepath, index=False)
        return True
    except Exception as e:
        raise IOError(f"Error saving {filepath}: {e}")


def save_excel(sheets: Dict[str, pd.DataFrame], filepath: str) -> bool:
    """
    Save several DataFrames as sheets of one xlsx workbook.

    Args:
        sheets: Mapping of sheet name to DataFrame
        filepath: Path of the workbook

    Returns:
        True if successful, raises exception otherwise
    """
    try:
        with pd.ExcelWriter(filepath, engine='xlsxwriter') as writer:
            for name, df in sheets.items():
                df.to_excel(writer, sheet_name=name[:31], index=False)
        return True
    except Exception as e:
        raise IOError(f"Error saving {filepath}: {e}")
