# Pydantic models for results and API payloads
