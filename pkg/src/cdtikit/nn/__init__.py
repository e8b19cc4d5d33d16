from . import functional, layers, unet

__all__ = ["functional", "layers", "unet"]
