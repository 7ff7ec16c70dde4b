from app.routers import experiment

__all__ = ["experiment"]
