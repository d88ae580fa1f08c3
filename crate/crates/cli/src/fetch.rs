//! Download locations for the CIFAR binary archives. Nothing is fetched
//! in-process.

pub struct Archive {
    pub name: &'static str,
    pub url: &'static str,
    pub md5: &'static str,
    /// Directory the archive unpacks to.
    pub unpacks_to: &'static str,
}

pub const ARCHIVES: [Archive; 2] = [
    Archive {
        name: "CIFAR-10",
        url: "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
        md5: "c32a1d4ab5d03f1284b67883e8d87530",
        unpacks_to: "cifar-10-batches-bin",
    },
    Archive {
        name: "CIFAR-100",
        url: "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
        md5: "03b5dce01913d631647c71ecec9e9cb8",
        unpacks_to: "cifar-100-binary",
    },
];

pub fn instructions() -> String {
    let mut s = String::new();
    for a in &ARCHIVES {
        s.push_str(&format!("{}\n  url: {}\n  md5: {}\n  unpacks to: {}\n", a.name, a.url, a.md5, a.unpacks_to));
    }
    s.push_str("\nexample:\n  mkdir -p data && cd data\n  curl -LO https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz\n  md5sum cifar-10-binary.tar.gz\n  tar xzf cifar-10-binary.tar.gz\n");
    s
}
