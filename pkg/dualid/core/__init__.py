"""
DUALID core pipeline: world, channels, identity, mapping, tracking, auth and attacks.
"""
