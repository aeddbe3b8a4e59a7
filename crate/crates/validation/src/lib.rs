//! Home of the `acceptance` test target; the library itself is empty. Kept as
//! a separate package so the suite runs after every other test target.
