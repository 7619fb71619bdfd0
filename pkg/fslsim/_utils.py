import sys
from typing import Iterable, List, Literal, Optional

from rich.console import Console
from rich.progress import track as track_base
from tqdm import tqdm as tqdm_base

from fslsim._settings import settings


def track(
    sequence: Iterable,
    description: str = "Working...",
    disable: bool = False,
    style: Optional[Literal["rich", "tqdm"]] = None,
    **kwargs
):
    """
    Progress bar with `'rich'` and `'tqdm'` styles, drawn on stderr.

    ``style`` defaults to ``fslsim.settings.progress_bar_style``.
    """
    style = settings.progress_bar_style if style is None else style
    if style not in ("rich", "tqdm"):
        raise ValueError("style must be one of ['rich', 'tqdm']")
    if disable:
        return sequence
    if style == "tqdm":
        return tqdm_base(sequence, desc=description, file=sys.stderr, leave=False, **kwargs)
    return track_base(
        sequence, description=description, console=Console(stderr=True), **kwargs
    )


def client_ids(n_clients: int) -> List[str]:
    """Zero-padded client identifiers that sort in numeric order."""
    width = max(2, len(str(n_clients)))
    return ["client{}".format(str(i + 1).zfill(width)) for i in range(n_clients)]
