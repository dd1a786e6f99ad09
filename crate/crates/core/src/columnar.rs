//! `DVCF` columnar container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DVCF"            4 bytes magic
//! version  u32      = 1
//! n_cols   u32
//! n_rows   u64
//! per column:       name_len u16, UTF-8 name, dtype u8 (0 = f64, 1 = i64)
//! column data       column-major, 8 bytes per value
//! crc32    u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Float columns are written as raw IEEE-754 bits, so NaN payloads survive.

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"DVCF";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_I64: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ColumnarError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("file truncated")]
    TruncatedFile,
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("column name is not valid UTF-8")]
    InvalidName,
    #[error("column name longer than 65535 bytes")]
    NameTooLong,
    #[error("column `{name}` has {got} rows, expected {expected}")]
    RaggedTable {
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float64(Vec<f64>),
    /// Signed 64-bit integers: epoch-nanosecond timestamps or labels.
    Int64(Vec<i64>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float64(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            ColumnData::Float64(_) => DTYPE_F64,
            ColumnData::Int64(_) => DTYPE_I64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn f64(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Float64(values),
        }
    }

    pub fn i64(name: impl Into<String>, values: Vec<i64>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Int64(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.data.len())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Bitwise equality; NaNs compare by payload.
    pub fn bit_eq(&self, other: &Table) -> bool {
        self.columns.len() == other.columns.len()
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.name == b.name
                    && match (&a.data, &b.data) {
                        (ColumnData::Float64(x), ColumnData::Float64(y)) => {
                            x.len() == y.len()
                                && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
                        }
                        (ColumnData::Int64(x), ColumnData::Int64(y)) => x == y,
                        _ => false,
                    }
            })
    }
}

pub fn write_columnar(table: &Table) -> Result<Vec<u8>, ColumnarError> {
    let n_rows = table.n_rows();
    let mut header_len = 4 + 4 + 4 + 8;
    for col in &table.columns {
        if col.data.len() != n_rows {
            return Err(ColumnarError::RaggedTable {
                name: col.name.clone(),
                expected: n_rows,
                got: col.data.len(),
            });
        }
        if col.name.len() > u16::MAX as usize {
            return Err(ColumnarError::NameTooLong);
        }
        header_len += 2 + col.name.len() + 1;
    }
    let mut out = Vec::with_capacity(header_len + table.columns.len() * n_rows * 8 + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(table.columns.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n_rows as u64).to_le_bytes());
    for col in &table.columns {
        out.extend_from_slice(&(col.name.len() as u16).to_le_bytes());
        out.extend_from_slice(col.name.as_bytes());
        out.push(col.data.dtype());
    }
    for col in &table.columns {
        match &col.data {
            ColumnData::Float64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_bits().to_le_bytes())),
            ColumnData::Int64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ColumnarError> {
        let end = self.pos.checked_add(n).ok_or(ColumnarError::TruncatedFile)?;
        let slice = self.bytes.get(self.pos..end).ok_or(ColumnarError::TruncatedFile)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ColumnarError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ColumnarError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ColumnarError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ColumnarError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_columnar(bytes: &[u8]) -> Result<Table, ColumnarError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(ColumnarError::BadMagic);
    }
    let version = cur.u32()?;
    let n_cols = cur.u32()? as usize;
    let n_rows = cur.u64()?;

    let mut schema = Vec::with_capacity(n_cols.min(1024));
    for _ in 0..n_cols {
        let len = cur.u16()? as usize;
        let name = cur.take(len)?.to_vec();
        let dtype = cur.u8()?;
        schema.push((name, dtype));
    }

    // Sizes are checked before the CRC so truncation is reported as such.
    let data_len = (n_cols as u64)
        .checked_mul(n_rows)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| usize::try_from(v).ok())
        .ok_or(ColumnarError::TruncatedFile)?;
    let expected_total = cur
        .pos
        .checked_add(data_len)
        .and_then(|v| v.checked_add(4))
        .ok_or(ColumnarError::TruncatedFile)?;
    if bytes.len() < expected_total {
        return Err(ColumnarError::TruncatedFile);
    }
    if bytes.len() > expected_total {
        return Err(ColumnarError::TrailingBytes(bytes.len() - expected_total));
    }
    let body = &bytes[..expected_total - 4];
    let stored = u32::from_le_bytes(bytes[expected_total - 4..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ColumnarError::CrcMismatch { stored, computed });
    }
    if version != FORMAT_VERSION {
        return Err(ColumnarError::UnsupportedVersion(version));
    }

    let n_rows = n_rows as usize;
    let mut columns = Vec::with_capacity(n_cols);
    for (name, dtype) in schema {
        let name = String::from_utf8(name).map_err(|_| ColumnarError::InvalidName)?;
        let raw = cur.take(n_rows * 8)?;
        let words = raw.chunks_exact(8).map(|c| c.try_into().unwrap());
        let data = match dtype {
            DTYPE_F64 => ColumnData::Float64(words.map(|w| f64::from_bits(u64::from_le_bytes(w))).collect()),
            DTYPE_I64 => ColumnData::Int64(words.map(i64::from_le_bytes).collect()),
            other => return Err(ColumnarError::UnknownDtype(other)),
        };
        columns.push(Column { name, data });
    }
    Ok(Table { columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_table_round_trips() {
        let t = Table::new(vec![Column::i64("timestamp", vec![]), Column::f64("v", vec![])]);
        let bytes = write_columnar(&t).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + (2 + 9 + 1) + (2 + 1 + 1) + 4);
        assert!(read_columnar(&bytes).unwrap().bit_eq(&t));
    }

    #[test]
    fn exact_byte_layout() {
        let t = Table::new(vec![Column::i64("t", vec![1]), Column::f64("v", vec![1.0])]);
        let bytes = write_columnar(&t).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"DVCF");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&[1, 0, b't', 1, 1, 0, b'v', 0]);
        expected.extend_from_slice(&1i64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_bits().to_le_bytes());
        let crc = crc32fast::hash(&expected);
        expected.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corruption_cases() {
        let t = Table::new(vec![Column::f64("v", vec![1.0, 2.0, 3.0])]);
        let bytes = write_columnar(&t).unwrap();
        assert_eq!(
            read_columnar(&bytes[..bytes.len() - 1]).unwrap_err(),
            ColumnarError::TruncatedFile
        );
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(read_columnar(&bad).unwrap_err(), ColumnarError::BadMagic);
        let mut bad = bytes.clone();
        let last_data = bytes.len() - 5;
        bad[last_data] ^= 0x01;
        assert!(matches!(read_columnar(&bad).unwrap_err(), ColumnarError::CrcMismatch { .. }));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(read_columnar(&long).unwrap_err(), ColumnarError::TrailingBytes(1));
    }

    #[test]
    fn ragged_tables_are_rejected() {
        let t = Table::new(vec![Column::f64("a", vec![1.0]), Column::f64("b", vec![])]);
        assert!(matches!(write_columnar(&t), Err(ColumnarError::RaggedTable { .. })));
    }

    fn special_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>(),
            Just(f64::NAN),
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            Just(-0.0),
            any::<u64>().prop_map(|bits| f64::from_bits(bits | 0x7ff0_0000_0000_0001)),
        ]
    }

    fn table_strategy() -> impl Strategy<Value = Table> {
        (0usize..50, 1usize..5).prop_flat_map(|(rows, cols)| {
            prop::collection::vec(
                prop_oneof![
                    prop::collection::vec(special_f64(), rows).prop_map(ColumnData::Float64),
                    prop::collection::vec(
                        prop_oneof![any::<i64>(), Just(i64::MIN), Just(i64::MAX)],
                        rows
                    )
                    .prop_map(ColumnData::Int64),
                ],
                cols,
            )
            .prop_map(|datas| {
                Table::new(
                    datas
                        .into_iter()
                        .enumerate()
                        .map(|(i, data)| Column { name: format!("c{i}é"), data })
                        .collect(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in table_strategy()) {
            let bytes = write_columnar(&t).unwrap();
            let back = read_columnar(&bytes).unwrap();
            prop_assert!(back.bit_eq(&t));
            prop_assert_eq!(write_columnar(&back).unwrap(), bytes);
        }

        #[test]
        fn any_flipped_byte_is_detected(t in table_strategy(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
            let mut bytes = write_columnar(&t).unwrap();
            let i = pos.index(bytes.len());
            bytes[i] ^= 1 << bit;
            prop_assert!(read_columnar(&bytes).is_err());
        }
    }
}
