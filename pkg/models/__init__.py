# Pydantic models shared across the pragmabench pipeline
