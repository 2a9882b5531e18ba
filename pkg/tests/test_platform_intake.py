"""Log line intake: classic syslog and ISO forms, file iteration."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from ctimp.platform.intake import LineParseError, iter_log_file, parse_log_line

from .conftest import FIXTURES


class TestClassicSyslog:
    def test_basic_line(self):
        event = parse_log_line(
            "Aug 14 09:15:01 web1 sshd[4210]: Failed password for root "
            "from 203.0.113.9 port 50211 ssh2")
        assert event.received_at == datetime(2026, 8, 14, 9, 15, 1, tzinfo=timezone.utc)
        assert event.source_host == "web1"
        assert event.program == "sshd"
        assert event.message == "Failed password for root from 203.0.113.9 port 50211 ssh2"

    def test_pid_suffix_stripped(self):
        event = parse_log_line("Aug 14 09:15:01 web1 nginx[99]: hello")
        assert event.program == "nginx"
        event = parse_log_line("Aug 14 09:15:01 web1 nginx: hello")
        assert event.program == "nginx"

    def test_default_year_applied(self):
        assert parse_log_line("Jan  2 00:00:00 h p: m").received_at.year == 2026
        assert parse_log_line("Jan  2 00:00:00 h p: m", default_year=1999).received_at.year == 1999

    def test_single_digit_day_double_space(self):
        event = parse_log_line("Aug  3 23:59:59 db1 dnsmasq: query[A] evil.test from 10.0.0.5")
        assert event.received_at == datetime(2026, 8, 3, 23, 59, 59, tzinfo=timezone.utc)

    def test_classic_timestamps_are_utc(self):
        assert parse_log_line("Aug 14 09:15:01 h p: m").received_at.tzinfo is timezone.utc

    def test_unknown_month_rejected(self):
        with pytest.raises(LineParseError):
            parse_log_line("Foo 14 09:15:01 web1 sshd: x")

    def test_impossible_date_rejected(self):
        with pytest.raises(LineParseError, match="bad classic timestamp"):
            parse_log_line("Feb 31 09:15:01 web1 sshd: x")

    def test_trailing_newline_tolerated(self):
        event = parse_log_line("Aug 14 09:15:01 web1 sshd: msg\r\n")
        assert event.message == "msg"


class TestIsoLines:
    def test_zulu(self):
        event = parse_log_line("2026-08-14T09:15:01Z web1 sshd[1]: hi")
        assert event.received_at == datetime(2026, 8, 14, 9, 15, 1, tzinfo=timezone.utc)
        assert event.program == "sshd"
        assert event.message == "hi"

    def test_numeric_offset_normalized(self):
        event = parse_log_line("2026-08-14T11:15:01+02:00 web1 sshd: hi")
        assert event.received_at == datetime(2026, 8, 14, 9, 15, 1, tzinfo=timezone.utc)

    def test_iso_ignores_default_year(self):
        event = parse_log_line("2024-01-01T00:00:00Z h p: m", default_year=2030)
        assert event.received_at.year == 2024

    def test_bad_iso_timestamp(self):
        with pytest.raises(LineParseError, match="bad ISO timestamp"):
            parse_log_line("2026-13-40T09:15:01Z web1 sshd: x")


class TestRejects:
    @pytest.mark.parametrize("line", [
        "",
        "not a log line",
        "Aug 14 09:15 web1 sshd: missing seconds",
        "Aug 14 09:15:01 web1",  # no program/message
        "<14>1 2026-08-14T09:15:01Z structured syslog - - - nope",
    ])
    def test_neither_form(self, line):
        with pytest.raises(LineParseError, match="neither syslog form"):
            parse_log_line(line)


class TestIterLogFile:
    def test_mixed_file(self, tmp_path):
        path = tmp_path / "mixed.log"
        path.write_text(
            "Aug 14 09:15:01 web1 sshd: one\n"
            "\n"
            "   \n"
            "garbage line\n"
            "2026-08-14T09:15:02Z web1 sshd: two\n")
        items = list(iter_log_file(path))
        assert [number for number, _ in items] == [1, 4, 5]
        assert items[0][1].message == "one"
        assert isinstance(items[1][1], LineParseError)
        assert items[2][1].message == "two"

    def test_fixture_auth_log_counts(self):
        items = list(iter_log_file(FIXTURES / "auth.log"))
        errors = [item for _, item in items if isinstance(item, LineParseError)]
        events = [item for _, item in items if not isinstance(item, LineParseError)]
        assert len(items) == 199
        assert len(errors) == 3
        assert len(events) == 196

    def test_line_numbers_count_blank_lines(self, tmp_path):
        path = tmp_path / "gaps.log"
        path.write_text("\n\nAug 14 09:15:01 web1 sshd: only\n")
        ((number, event),) = list(iter_log_file(path))
        assert number == 3
        assert event.message == "only"

    def test_default_year_forwarded(self, tmp_path):
        path = tmp_path / "year.log"
        path.write_text("Aug 14 09:15:01 web1 sshd: only\n")
        ((_, event),) = list(iter_log_file(path, default_year=2001))
        assert event.received_at.year == 2001

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            list(iter_log_file(tmp_path / "absent.log"))
