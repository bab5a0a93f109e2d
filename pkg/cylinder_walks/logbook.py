import os
import json
import pandas as pd
from datetime import datetime
from enum import Enum, auto
from dateutil.parser import parse

TIME_FORMAT = "%b %d, %Y %H:%M:%S"


class LogCode(Enum):
    """Enum to represent codes associated with logbook entries"""

    Info = auto()
    Warning = auto()
    Error = auto()
    Critical = auto()


class LogEntry:
    """A single `text` entry of a run `Logbook` with its `timestamp`, `code`
    (e.g., info or error) and the pipeline `stage` that wrote it

    Parameters
    ----------
    timestamp : datetime.datetime
        The timestamp for the entry

    text : str
        The text portion of the entry

    code : LogCode
        The code associated with the entry. Default is Info

    stage : str
        Pipeline stage, e.g. "simulate". Default is None

    Attributes
    ----------
    timestamp, text, code, stage
        as above
    """

    def __init__(self, timestamp, text, code=LogCode.Info, stage=None):
        self.timestamp = timestamp
        self.text = text
        self.code = LogCode.Info if code is None else code
        self.stage = stage

    def __eq__(self, other):
        # don't attempt to compare against unrelated types
        if not isinstance(other, self.__class__):
            return False
        return (
            self.timestamp == other.timestamp
            and self.text == other.text
            and self.code == other.code
            and self.stage == other.stage
        )

    def __repr__(self):
        return (
            f"<cylinder_walks.logbook.LogEntry timestamp:{self.timestamp} "
            f"stage:{self.stage} text:{self.text} code:{self.code}>\n"
        )

    def __hash__(self):
        return hash((self.timestamp, self.text, self.code, self.stage))

    def to_dict(self):
        return {
            "timestamp": self.timestamp.strftime(TIME_FORMAT),
            "stage": self.stage,
            "text": self.text,
            "code": self.code.name,
        }


class Logbook:
    """Run log with built-in querying. Every CLI invocation keeps one and
    writes it next to its artifacts.

    Parameters
    ----------
    entries : dict
        Dictionary of the form { `int` : LogEntry }. Default is an empty dictionary

    verbose : bool
        Whether to also print every new entry. Default is False

    Attributes
    ----------
    entries : dict
        Dictionary of the form { `int` : LogEntry }
    """

    def __init__(self, entries=None, verbose=False):
        self.entries = {} if entries is None else entries
        self.verbose = verbose

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return False
        return self.entries == other.entries

    def __repr__(self):
        return f"<cylinder_walks.logbook.Logbook entries:{len(self.entries)}>\n"

    def __hash__(self):
        return hash(str(self.entries))

    def __len__(self):
        return len(self.entries)

    def next_entry_id(self):
        """Gets the next entry ID by checking the current maximum ID

        Returns
        -------
        int
            ID for the next logbook entry
        """
        if len(self.entries) == 0:
            return 0
        return max(self.entries.keys()) + 1

    def add_entry(self, text, code=LogCode.Info, stage=None, timestamp=None):
        """Adds `text` under an automatically incremented ID

        Parameters
        ----------
        text : str
            Plaintext logbook entry

        code : LogCode
            Code associated with the entry. Default is Info

        stage : str
            Pipeline stage writing the entry. Default is None

        timestamp : datetime.datetime
            Default is None, meaning now

        Returns
        -------
        int
            ID of the new entry
        """
        if timestamp is None:
            timestamp = datetime.now().replace(microsecond=0)
        entry = LogEntry(timestamp, text, code=code, stage=stage)
        entry_id = self.next_entry_id()
        self.entries[entry_id] = entry
        if self.verbose:
            prefix = f"[{stage}] " if stage else ""
            print(f"{entry.code.name}: {prefix}{text}")
        return entry_id

    def remove_entry(self, entry_id):
        """Removes the entry with ID `entry_id`

        Raises
        ------
        KeyError
            When there is no such entry
        """
        del self.entries[entry_id]

    def load_entries(self, filepath):
        """Adds all the logbook entries from the given `filepath`.
        Supports both JSON and CSV file formats.

        Parameters
        ----------
        filepath : str
            The path to the file to load logbook entries from

        Raises
        ------
        ValueError
            When file extension is not `json` or `csv`
        """
        _, file_extension = os.path.splitext(filepath)
        if file_extension == ".csv":
            df = pd.read_csv(filepath)
            if "stage" not in df.columns:
                df["stage"] = None
            df["stage"] = df["stage"].astype(object).where(df["stage"].notna(), None)
            for row in df.itertuples():
                code = LogCode[row.code] if isinstance(row.code, str) else None
                self.entries[self.next_entry_id()] = LogEntry(
                    parse(row.timestamp, fuzzy=True), row.text, code, row.stage
                )
        elif file_extension == ".json":
            with open(filepath, "r") as file:
                data = json.load(file)
            for entry in data["entries"]:
                code = entry.get("code")
                self.entries[self.next_entry_id()] = LogEntry(
                    parse(entry["timestamp"], fuzzy=True),
                    entry["text"],
                    code=None if code is None else LogCode[code],
                    stage=entry.get("stage"),
                )
        else:
            raise ValueError(
                f"Invalid file extension {file_extension}. "
                "Only CSV and JSON are supported"
            )

    def to_json(self, outpath="", indent=4):
        """Save the current Logbook as a JSON file

        Parameters
        ----------
        outpath : str
            Path where logbook will be saved.
            Default is "", meaning that no file will be written

        indent : int
            number of spaces to indent the JSON file. Default is 4

        Returns
        -------
        dict
            json in dictionary format
        """
        result = {"entries": [entry.to_dict() for entry in self.entries.values()]}
        if outpath:
            with open(outpath, "w") as file:
                json.dump(result, file, indent=indent)
        return result

    def to_csv(self, outpath=""):
        """Save the current Logbook as a CSV file

        Returns
        -------
        pandas.DataFrame
            csv in DataFrame format
        """
        entry_df = pd.DataFrame(
            [entry.to_dict() for entry in self.entries.values()],
            columns=["timestamp", "stage", "text", "code"],
        )
        if outpath:
            entry_df.to_csv(outpath, index=False)
        return entry_df

    def query(self, code=None, stage=None, start=None, end=None, keyword=None):
        """Queries logbook entries by code, stage, timestamp and keyword.
        Every criterion left as None matches all entries.

        Returns
        -------
        dict
            Dictionary of matching logbook entries
        """
        return {
            entry_id: entry
            for entry_id, entry in self.entries.items()
            if (code is None or entry.code == code)
            and (stage is None or entry.stage == stage)
            and (start is None or entry.timestamp >= start)
            and (end is None or entry.timestamp <= end)
            and (keyword is None or keyword in entry.text)
        }

    def stage_failures(self):
        """Number of Error and Critical entries per stage"""
        counts = {}
        for entry in self.entries.values():
            if entry.code in (LogCode.Error, LogCode.Critical):
                counts[entry.stage] = counts.get(entry.stage, 0) + 1
        return counts
