#!/usr/bin/env python3
"""wapilog: logi WAPI -> wpisy -> sesje -> statystyki + raport jakości"""

import sys

from dotenv import load_dotenv

# Załaduj .env PRZED importami (WAPILOG_CONFIG, WAPILOG_LOG_LEVEL, ...)
load_dotenv()

from WapiLogAnalyzer.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
