//! Text embedding tables (`V e` header, then `word v1 … ve` per line) and
//! tab-separated bilingual lexicons.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Words and their vectors in file order, which is taken as frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(vocab: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vocab.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                got: vectors.nrows(),
            });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("word {w:?} is empty or contains whitespace")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { vocab, vectors, index })
    }

    /// Rows named by their index: "0", "1", ….
    pub fn with_integer_vocab(vectors: Array2<f64>) -> Self {
        let vocab = (0..vectors.nrows()).map(|i| i.to_string()).collect();
        Self::new(vocab, vectors).expect("integer words are unique")
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// 0-based position in file order; 0 is the most frequent word.
    pub fn frequency_rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.frequency_rank(word).map(|i| self.vectors.row(i))
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses the text format. `path` only labels errors.
pub fn read_embeddings<R: BufRead>(reader: R, path: &Path) -> Result<EmbeddingTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(format!("reading {}", path.display()), e))?,
        None => return Err(parse_err(path, 1, "missing header")),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [v, e] => match (v.parse::<usize>(), e.parse::<usize>()) {
            (Ok(v), Ok(e)) => (v, e),
            _ => return Err(parse_err(path, 1, format!("header must be two integers, got {header:?}"))),
        },
        _ => return Err(parse_err(path, 1, format!("header must be \"V e\", got {header:?}"))),
    };

    let mut vocab = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        if vocab.len() == count {
            return Err(parse_err(path, lineno, format!("more than {count} rows")));
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonblank line");
        let before = data.len();
        for tok in parts {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("invalid number {tok:?}")))?;
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(parse_err(path, lineno, format!("expected {dim} values, got {got}")));
        }
        if let Some(first) = seen.insert(word.to_string(), lineno) {
            return Err(parse_err(path, lineno, format!("duplicate word {word:?} (first on line {first})")));
        }
        vocab.push(word.to_string());
    }
    if vocab.len() != count {
        return Err(parse_err(path, 1, format!("header promises {count} rows, found {}", vocab.len())));
    }
    let vectors = Array2::from_shape_vec((count, dim), data).expect("row arity checked");
    EmbeddingTable::new(vocab, vectors)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_embeddings(BufReader::new(file), path)
}

/// Writes the text format with shortest round-trip decimals, so reading
/// the output back reproduces the table exactly.
pub fn write_embeddings<W: Write>(table: &EmbeddingTable, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let io = |e| Error::io("writing embeddings", e);
    writeln!(out, "{} {}", table.len(), table.dim()).map_err(io)?;
    for (word, row) in table.vocab.iter().zip(table.vectors.rows()) {
        write!(out, "{word}").map_err(io)?;
        for v in row {
            write!(out, " {v:?}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Gold translation pairs in file order, restricted to words present in
/// both tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub pairs: Vec<(String, String)>,
    /// Pairs dropped because a word was missing from its table.
    pub dropped_oov: usize,
}

impl Lexicon {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Parses `source<TAB>target` lines. `path` only labels errors.
pub fn read_lexicon<R: BufRead>(reader: R, path: &Path, source: &EmbeddingTable, target: &EmbeddingTable) -> Result<Lexicon> {
    let mut lex = Lexicon::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = match line.split('\t').collect::<Vec<_>>().as_slice() {
            [s, t] if !s.trim().is_empty() && !t.trim().is_empty() => (s.trim().to_string(), t.trim().to_string()),
            _ => return Err(parse_err(path, lineno, format!("expected \"source<TAB>target\", got {line:?}"))),
        };
        if source.contains(&s) && target.contains(&t) {
            lex.pairs.push((s, t));
        } else {
            lex.dropped_oov += 1;
        }
    }
    if lex.dropped_oov > 0 {
        log::info!("{}: dropped {} out-of-vocabulary pairs", path.display(), lex.dropped_oov);
    }
    if lex.is_empty() {
        log::warn!("{}: lexicon is empty", path.display());
    }
    Ok(lex)
}

pub fn load_lexicon(path: &Path, source: &EmbeddingTable, target: &EmbeddingTable) -> Result<Lexicon> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_lexicon(BufReader::new(file), path, source, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str) -> Result<EmbeddingTable> {
        read_embeddings(text.as_bytes(), Path::new("fixture.vec"))
    }

    fn parse_line_of(text: &str) -> usize {
        match parse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn small_fixture_parses_exactly() {
        let t = parse("2 3\nthe 0.1 -2 3e-3\ncat 1.5 0 -0.25\n").unwrap();
        assert_eq!(t.vocab(), ["the", "cat"]);
        assert_eq!(t.vectors(), &array![[0.1, -2.0, 0.003], [1.5, 0.0, -0.25]]);
        assert_eq!(t.frequency_rank("cat"), Some(1));
        assert_eq!(t.frequency_rank("dog"), None);
    }

    #[test]
    fn malformed_inputs_name_the_line() {
        assert_eq!(parse_line_of(""), 1);
        assert_eq!(parse_line_of("2\n"), 1);
        assert_eq!(parse_line_of("x 3\n"), 1);
        assert_eq!(parse_line_of("2 2\na 1 2\nb 1\n"), 3);
        assert_eq!(parse_line_of("2 2\na 1 2\nb 1 zz\n"), 3);
        assert_eq!(parse_line_of("2 2\na 1 2\na 3 4\n"), 3);
        assert_eq!(parse_line_of("1 2\na 1 2\nb 3 4\n"), 3);
        assert_eq!(parse_line_of("3 2\na 1 2\n"), 1);
    }

    #[test]
    fn write_then_read_is_exact() {
        let vectors = array![[0.1 + 0.2, -1e-300, 5e300], [f64::MIN_POSITIVE, 1.0 / 3.0, -0.0]];
        let t = EmbeddingTable::new(vec!["über".into(), "日本".into()], vectors).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&t, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.vocab(), t.vocab());
        for (a, b) in back.vectors().iter().zip(t.vectors()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn integer_vocabulary() {
        let t = EmbeddingTable::with_integer_vocab(Array2::zeros((3, 2)));
        assert_eq!(t.vocab(), ["0", "1", "2"]);
        assert!(EmbeddingTable::new(vec!["a".into(), "a".into()], Array2::zeros((2, 1))).is_err());
    }

    fn tables() -> (EmbeddingTable, EmbeddingTable) {
        let src = parse("4 1\ndog 1\ncat 2\nhouse 3\ntree 4\n").unwrap();
        let tgt = parse("4 1\ncane 1\ngatto 2\ncasa 3\nmicio 4\n").unwrap();
        (src, tgt)
    }

    #[test]
    fn lexicon_drops_oov_and_keeps_order() {
        let (src, tgt) = tables();
        let text = "dog\tcane\ncat\tgatto\nhouse\tcasa\nbird\tuccello\ncat\tmicio\n";
        let lex = read_lexicon(text.as_bytes(), Path::new("lex.tsv"), &src, &tgt).unwrap();
        assert_eq!(lex.len(), 4);
        assert_eq!(lex.dropped_oov, 1);
        assert_eq!(lex.pairs[3], ("cat".to_string(), "micio".to_string()));
        assert_eq!(lex.pairs.iter().filter(|(s, _)| s == "cat").count(), 2);
    }

    #[test]
    fn lexicon_empty_and_malformed() {
        let (src, tgt) = tables();
        let lex = read_lexicon("".as_bytes(), Path::new("lex.tsv"), &src, &tgt).unwrap();
        assert!(lex.is_empty());
        match read_lexicon("dog\tcane\ndog cane\n".as_bytes(), Path::new("lex.tsv"), &src, &tgt) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
