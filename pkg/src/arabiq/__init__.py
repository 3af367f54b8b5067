"""Image-to-Arabic-quiz platform: captioning + quiz generation pipeline,
Arabic lint gate, learner API, and human-evaluation reporting."""

__version__ = "0.1.0"
