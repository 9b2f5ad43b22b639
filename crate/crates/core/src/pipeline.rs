//! End-to-end orchestration from configuration to channel and key-rate artifacts.
