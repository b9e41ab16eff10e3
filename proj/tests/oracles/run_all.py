"""Regenerate (default) or verify (--check) every frozen oracle value."""
import os
import subprocess
import sys

here = os.path.dirname(os.path.abspath(__file__))
scripts = ["param_count.py", "gelu_mlp.py", "ssim_fixture.py", "bilinear.py", "frechet.py", "luminance.py"]
failed = 0
for s in scripts:
    failed |= subprocess.call([sys.executable, os.path.join(here, s)] + sys.argv[1:]) != 0
sys.exit(failed)
