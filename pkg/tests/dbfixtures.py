"""Fixture databases used across the test suite."""

from __future__ import annotations

import csv
import sqlite3
from pathlib import Path

BANKING_DESCRIPTIONS = {
    "account": {
        "account_id": "the id of the account",
        "district_id": "location of branch",
        "frequency": "frequency of the acount",
        "date": "the creation date of the account",
    },
    "client": {
        "client_id": "the unique number",
        "gender": "gender",
        "birth_date": "birth date",
        "district_id": "location of branch",
    },
    "loan": {
        "loan_id": "the id number identifying the loan data",
        "account_id": "the id number identifying the account",
        "date": "the date when the loan is approved",
        "amount": "the id number identifying the loan data",
        "duration": "the id number identifying the loan data",
        "payments": "the id number identifying the loan data",
        "status": "the id number identifying the loan data",
    },
    "district": {
        "district_id": "location of branch",
        "A2": "area in square kilometers",
        "A4": "number of inhabitants",
        "A5": "number of households",
        "A6": "literacy rate",
        "A7": "number of entrepreneurs",
        "A8": "number of cities",
        "A9": "number of schools",
        "A10": "number of hospitals",
        "A11": "average salary",
        "A12": "poverty rate",
        "A13": "unemployment rate",
        "A15": "number of crimes",
    },
}


def build_banking_db(path: Path) -> Path:
    """Four-table banking database; matches the worked examples used in prompts."""
    conn = sqlite3.connect(path)
    conn.executescript("""
        CREATE TABLE account (
            account_id INTEGER PRIMARY KEY,
            district_id INTEGER,
            frequency TEXT,
            date TEXT,
            FOREIGN KEY (district_id) REFERENCES district(district_id)
        );
        CREATE TABLE client (
            client_id INTEGER PRIMARY KEY,
            gender TEXT,
            birth_date TEXT,
            district_id INTEGER,
            FOREIGN KEY (district_id) REFERENCES district(district_id)
        );
        CREATE TABLE loan (
            loan_id INTEGER PRIMARY KEY,
            account_id INTEGER,
            date TEXT,
            amount INTEGER,
            duration INTEGER,
            payments INTEGER,
            status TEXT,
            FOREIGN KEY (account_id) REFERENCES account(account_id)
        );
        CREATE TABLE district (
            district_id INTEGER PRIMARY KEY,
            A2 REAL, A4 INTEGER, A5 INTEGER, A6 REAL, A7 INTEGER, A8 INTEGER,
            A9 INTEGER, A10 INTEGER, A11 INTEGER, A12 REAL, A13 REAL, A15 INTEGER
        );
    """)
    conn.executemany(
        "INSERT INTO district VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?)",
        [
            (1, 50.5, 95907, 35678, 95.6, 1234, 5, 15, 8, 12541, 12.4, 8.2, 256),
            (2, 48.9, 95616, 34892, 92.3, 1456, 4, 12, 6, 8114, 9.8, 7.9, 189),
            (3, 30.1, 94812, 31000, 89.7, 900, 3, 10, 4, 11277, 10.2, 6.5, 120),
        ],
    )
    conn.executemany(
        "INSERT INTO client VALUES (?,?,?,?)",
        [
            (1, "M", "1970-01-05", 1),
            (2, "F", "1992-03-11", 2),
            (3, "M", "1987-09-27", 2),
            (4, "M", "1986-08-13", 1),
            (5, "F", "1975-12-01", 3),
        ],
    )
    conn.executemany(
        "INSERT INTO account VALUES (?,?,?,?)",
        [
            (1, 1, "POPLATEK MESICNE", "1997-12-29"),
            (2, 2, "POPLATEK TYDNE", "1997-12-28"),
            (3, 2, "POPLATEK MESICNE", "1996-05-10"),
            (4, 3, "POPLATEK PO OBRATU", "1995-01-01"),
        ],
    )
    conn.executemany(
        "INSERT INTO loan VALUES (?,?,?,?,?,?,?)",
        [
            (1, 1, "1998-07-12", 1567, 60, 3456, "C"),
            (2, 3, "1998-04-19", 7877, 48, 8972, "A"),
        ],
    )
    conn.commit()
    conn.close()
    return path


def write_banking_description_csvs(db_dir: Path) -> None:
    """BIRD-layout description CSVs next to the database file."""
    desc_dir = db_dir / "database_description"
    desc_dir.mkdir(parents=True, exist_ok=True)
    for table, columns in BANKING_DESCRIPTIONS.items():
        with open(desc_dir / f"{table}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["original_column_name", "column_name",
                             "column_description", "data_format", "value_description"])
            for original, description in columns.items():
                writer.writerow([original, original, description, "", ""])


def build_banking_bird_layout(root: Path) -> Path:
    """<root>/banking_system/banking_system.sqlite plus description CSVs."""
    db_dir = root / "banking_system"
    db_dir.mkdir(parents=True, exist_ok=True)
    db_path = db_dir / "banking_system.sqlite"
    if not db_path.exists():
        build_banking_db(db_path)
        write_banking_description_csvs(db_dir)
    return db_path


def build_shop_db(path: Path) -> Path:
    """Small retail database for metric fixtures."""
    conn = sqlite3.connect(path)
    conn.executescript("""
        CREATE TABLE products (
            product_id INTEGER PRIMARY KEY,
            name TEXT,
            category TEXT,
            price REAL
        );
        CREATE TABLE orders (
            order_id INTEGER PRIMARY KEY,
            product_id INTEGER,
            quantity INTEGER,
            customer TEXT,
            FOREIGN KEY (product_id) REFERENCES products(product_id)
        );
    """)
    conn.executemany(
        "INSERT INTO products VALUES (?,?,?,?)",
        [
            (1, "pencil", "stationery", 0.5),
            (2, "notebook", "stationery", 2.5),
            (3, "mug", "kitchen", 7.0),
            (4, "kettle", "kitchen", 25.0),
            (5, "lamp", "home", 18.0),
        ],
    )
    conn.executemany(
        "INSERT INTO orders VALUES (?,?,?,?)",
        [
            (1, 1, 10, "ana"),
            (2, 2, 3, "ana"),
            (3, 2, 1, "bo"),
            (4, 3, 2, "cary"),
            (5, 4, 1, "bo"),
            (6, 5, 4, "dee"),
            (7, 1, 5, "cary"),
        ],
    )
    conn.commit()
    conn.close()
    return path


def build_library_db(path: Path) -> Path:
    """Small library database for metric fixtures."""
    conn = sqlite3.connect(path)
    conn.executescript("""
        CREATE TABLE books (
            book_id INTEGER PRIMARY KEY,
            title TEXT,
            author TEXT,
            year INTEGER
        );
        CREATE TABLE loans (
            loan_id INTEGER PRIMARY KEY,
            book_id INTEGER,
            member TEXT,
            returned INTEGER,
            FOREIGN KEY (book_id) REFERENCES books(book_id)
        );
    """)
    conn.executemany(
        "INSERT INTO books VALUES (?,?,?,?)",
        [
            (1, "Dune", "Herbert", 1965),
            (2, "Emma", "Austen", 1815),
            (3, "It", "King", 1986),
            (4, "Solaris", "Lem", 1961),
        ],
    )
    conn.executemany(
        "INSERT INTO loans VALUES (?,?,?,?)",
        [
            (1, 1, "kim", 1),
            (2, 1, "lee", 0),
            (3, 2, "kim", 1),
            (4, 3, "pat", 0),
            (5, 4, "lee", 1),
            (6, 2, "pat", 1),
        ],
    )
    conn.commit()
    conn.close()
    return path


def build_school_db(path: Path) -> Path:
    """Tables with awkward column names (spaces, parens) and untyped columns."""
    conn = sqlite3.connect(path)
    conn.executescript("""
        CREATE TABLE frpm (
            CDSCode TEXT PRIMARY KEY,
            "Charter School (Y/N)",
            "Enrollment (Ages 5-17)" REAL
        );
        CREATE TABLE satscores (
            cds TEXT PRIMARY KEY,
            sname TEXT,
            NumTstTakr INTEGER,
            NumGE1500 INTEGER,
            FOREIGN KEY (cds) REFERENCES frpm(CDSCode)
        );
    """)
    conn.executemany(
        "INSERT INTO frpm VALUES (?,?,?)",
        [
            ("01", 1, 500.0),
            ("02", 1, 750.0),
            ("03", 0, 300.0),
            ("04", 1, 420.0),
            ("05", 0, 610.0),
        ],
    )
    conn.executemany(
        "INSERT INTO satscores VALUES (?,?,?,?)",
        [
            ("01", "North High", 100, 40),
            ("02", "South High", 200, 150),
            ("03", "East High", 50, 5),
            ("04", "West High", 80, 10),
            ("05", "Central High", 120, 60),
        ],
    )
    conn.commit()
    conn.close()
    return path
