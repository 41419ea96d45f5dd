//! Scenario library.
