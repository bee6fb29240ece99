""" Utility functions for persistence and random streams. """
import json
import os
import pathlib
import zlib
from typing import Any

import h5py
import numpy as np
import pandas as pd

from imbalance_forecast import exceptions


def save(frame: pd.DataFrame, filename: str | pathlib.Path) -> None:
    """
    Saves a table to a file with the given filename.

    Args:
        frame: The table to save. The index is written alongside the values.
        filename: The filename to save the table to. The suffix selects the format.

    """
    filename = pathlib.Path(filename)
    if filename.suffix == ".csv":
        save_csv(frame, filename)
    elif filename.suffix == ".h5":
        save_hdf5(frame, filename)
    elif filename.suffix == ".json":
        save_json(frame_to_records(frame), filename)
    else:
        raise exceptions.InternalError(f"Unsupported file type: {filename}")


def save_csv(frame: pd.DataFrame, filename: str | pathlib.Path) -> None:
    """
    Saves a table to a CSV file. Floats are written in their shortest exact
    representation and missing values as empty strings.

    Args:
        frame: The table to save.
        filename: The filename to save the table to.

    """
    frame.to_csv(filename, index=True, na_rep="", lineterminator="\n")


def save_hdf5(frame: pd.DataFrame, filename: str | pathlib.Path) -> None:
    """
    Saves a numeric table to a HDF5 file with the given filename.

    Args:
        frame: The table to save; all columns must be numeric.
        filename: The filename to save the table to.

    """
    index = frame.index.to_frame(index=False).astype(str)
    with h5py.File(filename, "w") as h5_file:
        h5_file.create_dataset("values", data=frame.to_numpy(dtype=np.float64))
        h5_file.create_dataset(
            "columns", data=np.array(frame.columns.astype(str), dtype="S")
        )
        h5_file.create_dataset("index", data=index.to_numpy().astype("S"))
        h5_file.attrs["index_names"] = json.dumps(list(index.columns))


def save_json(obj: Any, filename: str | pathlib.Path) -> None:
    """
    Saves a JSON-compatible object to a JSON file with the given filename.

    Args:
        obj: The object to save.
        filename: The filename to save the object to.

    """
    with open(filename, "w", encoding="utf-8") as file_buffer:
        json.dump(obj, file_buffer, indent=2, sort_keys=True, allow_nan=True)
        file_buffer.write("\n")


def load_json(filename: str | pathlib.Path) -> Any:
    """Loads a JSON file."""
    with open(filename, "r", encoding="utf-8") as file_buffer:
        return json.load(file_buffer)


def frame_to_records(frame: pd.DataFrame) -> list[dict[str, Any]]:
    """Converts a table, index included, into a list of JSON-compatible rows.

    Args:
        frame: The table to convert.

    Returns:
        One dictionary per row. Missing values become None.
    """
    flat = frame.reset_index()
    records = []
    for row in flat.itertuples(index=False):
        record = {}
        for key, value in zip(flat.columns, row):
            if isinstance(value, (float, np.floating)):
                record[str(key)] = None if np.isnan(value) else float(value)
            elif isinstance(value, (np.integer,)):
                record[str(key)] = int(value)
            elif isinstance(value, pd.Timestamp):
                record[str(key)] = value.date().isoformat()
            else:
                record[str(key)] = value
        records.append(record)
    return records


def append_jsonl(record: dict[str, Any], filename: str | pathlib.Path) -> None:
    """Appends a single JSON line to a file and forces it to disk.

    Args:
        record: The JSON-compatible object to append.
        filename: The JSON-lines file.
    """
    line = json.dumps(record, sort_keys=True) + "\n"
    with open(filename, "a", encoding="utf-8") as file_buffer:
        file_buffer.write(line)
        file_buffer.flush()
        os.fsync(file_buffer.fileno())


def stable_hash(key: Any) -> int:
    """Returns a process-independent non-negative integer hash of a key."""
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(seed: int, *keys: Any) -> np.random.Generator:
    """Creates an independent random generator for a seed and a tuple of keys.

    Args:
        seed: The base seed.
        keys: Any values identifying the stream, e.g. model id, day and
            quarter-hour.

    Returns:
        A generator whose stream depends only on the seed and the keys.
    """
    entropy = [int(seed)] + [stable_hash(key) for key in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
