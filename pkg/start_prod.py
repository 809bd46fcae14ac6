#!/usr/bin/env python3
"""
Production startup script for the pricing API
"""

import os
import uvicorn

from config import configure_logging, get_settings

# Production settings
if __name__ == "__main__":
    configure_logging()
    settings = get_settings()
    print(f"🚀 Starting Delayed-Information Pricing API on port {settings.port}...")
    print(f"🌍 Environment: {os.getenv('ENVIRONMENT', 'production')}")
    print(f"🧮 Arithmetic: {settings.mode}")

    uvicorn.run(
        "api:app",
        host="0.0.0.0",
        port=settings.port,
        reload=False,  # Disable reload in production
        log_level=settings.log_level,
        access_log=True,
        workers=1
    )
