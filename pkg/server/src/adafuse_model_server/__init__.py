from .server import ServedModel, create_app, main

__all__ = ["ServedModel", "create_app", "main"]
