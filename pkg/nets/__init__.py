"""Translation generators, discriminators and 3D segmentation networks"""
