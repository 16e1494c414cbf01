# coding: utf-8
import sys

from adsim.cli import main

sys.exit(main())
