//! Exhaustive oracle for the SVR → SVRI → HLS pipeline: a from-scratch
//! enumeration over the raw link table, compared against the engine's
//! pipeline on a story-built agent state. The oracle body lives in
//! `common::hls` and is shared with the acceptance target.

mod common;

#[test]
fn pipeline_matches_exhaustive_enumeration() {
    common::hls::check_pipeline();
}
