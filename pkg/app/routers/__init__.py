# Routers package for FastAPI endpoints
