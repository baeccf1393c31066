//! Trajectory ingestion: records, discretisation, quadruples, splits and
//! vocabularies.

mod grid;
mod parse;
mod quadruple;
mod time;
mod vocab;

pub use grid::GridSpec;
pub use parse::{
    parse_gps, parse_records, parse_triples, resolve_gps, write_records, GpsPoint, InputFormat,
    ParsedRecords, Record,
};
pub use quadruple::{
    build_quadruples, drop_self_loops, filter_by_transition_frequency, read_quadruples, split,
    write_quadruples, Split, SplitRatios, TokenQuadruple,
};
pub use time::{parse_window, TimeSlotting};
pub use vocab::{
    build_vocab_and_index, CandidateIndex, EncodedContext, IndexedQuadruple, Vocab, Vocabulary,
};
