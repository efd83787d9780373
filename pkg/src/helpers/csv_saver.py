import os

import pandas as pd

from src.helpers.logger import log_message


def csv_saver(df: pd.DataFrame, output_path: str, filename: str, folder: str, run_name: str) -> str:
    """
    Saves a report DataFrame to CSV.

    The file is written as `<filename>.partial` first and renamed once
    complete, so an interrupted run never leaves a truncated report behind.

    Args:
        df (pd.DataFrame): DataFrame to save.
        output_path (str): Destination directory for the CSV.
        filename (str): Name of the CSV inside output_path.
        folder (str): Log folder of the calling step.
        run_name (str): Run being processed.

    Returns:
        str: Full path of the saved file.
    """
    full_file_path = os.path.join(output_path, filename)
    partial_path = f"{full_file_path}.partial"
    try:
        os.makedirs(output_path or ".", exist_ok=True)
        df.to_csv(partial_path, index=False, lineterminator="\n")
        os.replace(partial_path, full_file_path)
        log_message(folder, run_name, f"DataFrame successfully saved to: {full_file_path}")
        return full_file_path
    except Exception as e:
        log_message(folder, run_name, f"ERROR saving DataFrame to {full_file_path}: {e}", level="error")
        if os.path.exists(partial_path):
            os.remove(partial_path)
        raise
