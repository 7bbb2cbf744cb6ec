//! Holds the acceptance gate; see tests/acceptance.rs.
