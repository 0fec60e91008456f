"""TPA yield prediction from PET aqueous-hydrolysis reaction conditions."""

__version__ = "0.1.0"
