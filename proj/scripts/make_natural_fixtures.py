"""Writes the ten 512x512 photo crops used by the shape acceptance check.

Sources are sample photographs bundled with common Python packages:
scikit-image, matplotlib, the imgaug wheel (quokka) and the scipy 1.9 wheel
(raccoon face, ascent). The two wheels are fetched with `pip download`.
"""
import bz2
import glob
import io
import pathlib
import pickle
import subprocess
import sys
import tempfile
import zipfile

import matplotlib.cbook
import numpy as np
import skimage.data as data
from PIL import Image
from skimage.io import imsave


def wheel_member(requirement, member):
    tmp = tempfile.mkdtemp()
    subprocess.run([sys.executable, "-m", "pip", "download", requirement, "--no-deps", "-q", "-d", tmp],
                   check=True)
    with zipfile.ZipFile(glob.glob(f"{tmp}/*.whl")[0]) as z:
        return z.read(member)


out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data/natural")
out.mkdir(parents=True, exist_ok=True)

hopper = np.asarray(Image.open(matplotlib.cbook.get_sample_data("grace_hopper.jpg")))
quokka = np.asarray(Image.open(io.BytesIO(wheel_member("imgaug==0.4.0", "imgaug/quokka.jpg"))))
face = np.frombuffer(bz2.decompress(wheel_member("scipy==1.9.3", "scipy/misc/face.dat")),
                     dtype=np.uint8).reshape(768, 1024, 3)
ascent = np.asarray(pickle.loads(wheel_member("scipy==1.9.3", "scipy/misc/ascent.dat")), dtype=np.uint8)

crops = {
    "astronaut": (data.astronaut(), 0, 0),
    "camera": (data.camera(), 0, 0),
    "brick": (data.brick(), 0, 0),
    "grass": (data.grass(), 0, 0),
    "gravel": (data.gravel(), 0, 0),
    "hopper": (hopper, 44, 0),
    "quokka": (quokka, 60, 220),
    "face_left": (face, 128, 0),
    "face_right": (face, 128, 512),
    "ascent": (ascent, 0, 0),
}

for name, (img, y, x) in crops.items():
    crop = np.ascontiguousarray(img[y:y + 512, x:x + 512])
    assert crop.shape[:2] == (512, 512) and crop.dtype == np.uint8, (name, crop.shape)
    imsave(out / f"{name}.png", crop, check_contrast=False)
    print(name, crop.shape)
