//! Recursive depth-first GUI exploration for Android-style apps.
//!
//! The engine launches each app component with a time budget proportional to
//! its UI complexity, then recursively analyzes every screen it reaches:
//! screens with text fields are handed to a vision-language model that plans
//! an action sequence over a numbered screenshot, everything else is driven by
//! ordering heuristics. State transitions are recorded so the explorer can
//! replay its way back after an action navigates away.

pub mod action;
pub mod budget;
pub mod cli;
pub mod device;
pub mod explorer;
pub mod hierarchy;
pub mod manifest;
pub mod report;
pub mod state;
pub mod vlm;
