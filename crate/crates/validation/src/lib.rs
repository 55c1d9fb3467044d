//! Holds the `acceptance` test target. Run it with
//! `cargo test -p lfc-validation --test acceptance`; it prints one PASS or
//! FAIL line per criterion and exits non-zero if any fails.
