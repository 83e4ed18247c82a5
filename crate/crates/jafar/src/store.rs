//! Flat little-endian f64 block storage. Every parameter name gets its own
//! `<name>.f64` file under `blocks/`; `index.tsv` lists
//! `name rows cols iteration offset` with offsets counted in values.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.tsv";
const BLOCK_DIR: &str = "blocks";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub iteration: usize,
    pub offset: usize,
}

pub struct BlockWriter {
    dir: PathBuf,
    files: BTreeMap<String, (BufWriter<File>, usize)>,
    index: Vec<Entry>,
}

fn block_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(BLOCK_DIR).join(format!("{name}.f64"))
}

impl BlockWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let blocks = dir.join(BLOCK_DIR);
        fs::create_dir_all(&blocks).map_err(|e| Error::io(&blocks, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new(), index: Vec::new() })
    }

    /// Appends a block; matrices are stored column-major.
    pub fn put(&mut self, name: &str, iteration: usize, m: &DMatrix<f64>) -> Result<()> {
        if !self.files.contains_key(name) {
            let path = block_path(&self.dir, name);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            self.files.insert(name.to_string(), (BufWriter::new(f), 0));
        }
        let (w, offset) = self.files.get_mut(name).expect("just inserted");
        let mut buf = Vec::with_capacity(8 * m.len());
        for v in m.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(&block_path(&self.dir, name), e))?;
        self.index.push(Entry { name: name.to_string(), rows: m.nrows(), cols: m.ncols(), iteration, offset: *offset });
        *offset += m.len();
        Ok(())
    }

    pub fn put_slice(&mut self, name: &str, iteration: usize, v: &[f64]) -> Result<()> {
        self.put(name, iteration, &DMatrix::from_column_slice(v.len(), 1, v))
    }

    pub fn finish(mut self) -> Result<()> {
        for (name, (w, _)) in &mut self.files {
            w.flush().map_err(|e| Error::io(&block_path(&self.dir, name), e))?;
        }
        let path = self.dir.join(INDEX_FILE);
        let mut out = String::from("name\trows\tcols\titeration\toffset\n");
        for e in &self.index {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", e.name, e.rows, e.cols, e.iteration, e.offset));
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }
}

pub struct BlockReader {
    lookup: BTreeMap<(String, usize), Entry>,
    data: BTreeMap<String, Vec<f64>>,
}

impl BlockReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut lookup = BTreeMap::new();
        for (n, line) in BufReader::new(f).lines().enumerate().skip(1) {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            let num = |i: usize| -> Result<usize> {
                cells.get(i).and_then(|c| c.parse().ok()).ok_or_else(|| Error::parse(&path, format!("bad index line {}", n + 1)))
            };
            let e = Entry { name: cells[0].to_string(), rows: num(1)?, cols: num(2)?, iteration: num(3)?, offset: num(4)? };
            lookup.insert((e.name.clone(), e.iteration), e);
        }
        let mut data = BTreeMap::new();
        for (name, _) in lookup.keys() {
            if data.contains_key(name) {
                continue;
            }
            let p = block_path(dir, name);
            let mut bytes = Vec::new();
            File::open(&p).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(&p, e))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::parse(&p, "length is not a multiple of 8 bytes"));
            }
            let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            data.insert(name.clone(), values);
        }
        Ok(Self { lookup, data })
    }

    pub fn get(&self, name: &str, iteration: usize) -> Result<DMatrix<f64>> {
        let missing = || Error::Parse { path: PathBuf::from(INDEX_FILE), msg: format!("no block `{name}` at iteration {iteration}") };
        let e = self.lookup.get(&(name.to_string(), iteration)).ok_or_else(missing)?;
        let values = self.data.get(name).ok_or_else(missing)?;
        let end = e.offset + e.rows * e.cols;
        if end > values.len() {
            return Err(Error::Parse { path: PathBuf::from(name), msg: "block runs past the end of its file".into() });
        }
        Ok(DMatrix::from_column_slice(e.rows, e.cols, &values[e.offset..end]))
    }

    pub fn get_vec(&self, name: &str, iteration: usize) -> Result<Vec<f64>> {
        Ok(self.get(name, iteration)?.as_slice().to_vec())
    }

    pub fn has(&self, name: &str, iteration: usize) -> bool {
        self.lookup.contains_key(&(name.to_string(), iteration))
    }
}
