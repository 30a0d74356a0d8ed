import os
import tempfile


def write_text_atomic(path: str, content: str) -> None:
    """
    Write ``content`` to ``path`` so that readers never observe a partial file.

    The text goes to a temporary file in the same directory, which then replaces
    the target in a single rename.
    """
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as file:
            file.write(content)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
