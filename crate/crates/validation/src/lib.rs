//! Acceptance checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p permucate-validation --test acceptance`. Pass criterion
//! numbers after `--` to run a subset.
