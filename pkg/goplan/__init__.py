# coding=utf-8

__version__ = "0.1.0"
__author__ = "goplan developers"
__license__ = "GNU Affero General Public License http://www.gnu.org/licenses/agpl.html"
