import os
import tempfile

import pandas as pd


class EdgeflowError(Exception):
    """Base class for every error the runtime raises on purpose"""


def error_body(error_msg, exception=None):
    """Centralized error body for failed executions and HTTP error replies"""
    if exception:
        error_details = f": {str(exception)}"
    else:
        error_details = ""
    return {"status": "error", "error_detail": f"{error_msg}{error_details}"}


def write_atomic(path, text):
    """Write text next to its destination, then rename it into place"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_frame_atomic(path, frame: pd.DataFrame, float_format="%.3f"):
    """Write a DataFrame as CSV through write_atomic"""
    text = frame.to_csv(index=False, float_format=float_format, lineterminator="\n")
    write_atomic(path, text)


def format_number(value):
    """Render a threshold or reading without trailing zeros (4 instead of 4.0)"""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)
