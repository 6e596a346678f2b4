"""Motion-aware real-time video-to-audio assistance.

Live camera frames stream in over a WebSocket, get batched in pairs,
classified as low or high movement, interpreted into semantic audio
categories, and answered with throttled, cached audio feedback.
"""

__version__ = "0.1.0"
