from .codec import decode_latent, encode_image
from .schedule import NoiseSchedule, add_noise, denoising_loss, make_schedule
from .unet import AttentionCapture, AttentionMap, UNet

__all__ = [
    "AttentionCapture",
    "AttentionMap",
    "NoiseSchedule",
    "UNet",
    "add_noise",
    "decode_latent",
    "denoising_loss",
    "encode_image",
    "make_schedule",
]
