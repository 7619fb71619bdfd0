import logging
import os
import urllib.request

import numpy as np

from fslsim._utils import track

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024 * 64


def _download(url: str, save_path: str, filename: str):
    """Fetch ``url`` into ``save_path/filename`` unless the file is already there."""
    target = os.path.join(save_path, filename)
    if os.path.exists(target):
        logger.info("File {} already downloaded".format(target))
        return
    os.makedirs(save_path, exist_ok=True)
    request = urllib.request.Request(url, headers={"User-Agent": "fslsim"})
    logger.info("Downloading {} to {}".format(url, target))
    partial = target + ".part"
    with urllib.request.urlopen(request) as response, open(partial, "wb") as f:
        length = response.getheader("Content-Length")
        n_blocks = int(np.ceil(int(length) / BLOCK_SIZE)) if length else None
        blocks = iter(lambda: response.read(BLOCK_SIZE), b"")
        for block in track(blocks, style="tqdm", total=n_blocks, description="Downloading..."):
            f.write(block)
    # only complete files get the final name
    os.replace(partial, target)
