"""Song emotion recognition from a-cappella recordings.

Feature extraction, a small float64 neural-network engine, the four
reference architectures, waveform augmentation and a k-fold harness.
"""

__version__ = "0.1.0"

EMOTIONS = ("neutral", "calm", "happy", "sad", "angry", "fearful")
NUM_CLASSES = len(EMOTIONS)

SAMPLE_RATE = 22050
HOP_LENGTH = 256
N_FFT = 2048
NUM_FRAMES = 422
CLIP_SAMPLES = (NUM_FRAMES - 1) * HOP_LENGTH  # 107,776
