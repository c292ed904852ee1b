#!/usr/bin/env python3
"""Run every registry problem under all four strategy/mechanism pairs and
write compare.csv plus a performance profile over outer iterations."""

import subprocess
import sys


def main():
    rc = subprocess.call([sys.executable, "-m", "funnel_sqp.cli", "compare",
                          "--csv", "compare.csv"])
    if rc:
        return rc
    return subprocess.call([sys.executable, "-m", "funnel_sqp.cli",
                            "profile", "--metric", "outer",
                            "--csv", "profile.csv"])


if __name__ == "__main__":
    sys.exit(main())
