//! PGM images, dataset pairing, evaluation and report formats.

mod dataset;
mod pgm;
mod report;

pub use dataset::{evaluate, load_pair, pair_dataset, resize_map, Evaluation, PairEntry, Pairing};
pub use pgm::{read_pgm, read_pgm_file, write_pgm, write_pgm_file, GrayImage};
pub use report::{
    column_order, curves_csv, parse_report_csv, per_image_csv, report_csv, report_markdown,
    N_IMAGES_COLUMN,
};
