"""Dynamic functional-connectivity graphs from multichannel EEG and a
spatio-temporal graph network (GAT + BiGRU) to classify subjects."""

__version__ = "0.1.0"
