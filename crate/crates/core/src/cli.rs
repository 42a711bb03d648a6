//! Command-line frontend (placeholder).
pub fn run() -> i32 {
    0
}
